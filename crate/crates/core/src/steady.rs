//! Periodic steady states of the nonlinear system and their branch in the
//! growth shift `beta` (`r_u + beta`, `r_v + beta`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::{CoefficientField, FieldSamples};
use crate::grid::PeriodicGrid;
use crate::linalg::{Block2, BlockTridiag, BlockTridiagLu, CyclicTridiagLu, LinalgError, Vec2};
use crate::spectral::{periodic_principal_eig, EigenOptions, SpectralError};

/// Below this sup-norm of `p + q` a converged state counts as trivial.
pub const NONTRIVIAL_THRESHOLD: f64 = 1e-6;
/// Marching stops as extinct below this sup-norm of `p + q`.
pub const COLLAPSE_THRESHOLD: f64 = 1e-12;
/// Undershoots below this value are clipped to zero and counted.
pub const CLIP_THRESHOLD: f64 = -1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error("time march did not settle by t = {t_max} (last derivative {derivative:e})")]
    NotConverged { t_max: f64, derivative: f64 },
    #[error("solution collapsed to zero at t = {t}")]
    CollapsedToZero { t: f64 },
    #[error("Newton Jacobian is singular ({0})")]
    JacobianSingular(LinalgError),
    #[error("Newton diverged after {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("Newton converged to the trivial state")]
    ConvergedToTrivial,
    #[error("branch lost at beta = {beta}")]
    BranchLost { beta: f64 },
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    TimeMarch,
    Newton,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::TimeMarch => "time_march",
            Method::Newton => "newton",
        }
    }
}

/// A periodic steady state `(p, q)` on one period.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Sup-norm of the discrete stationary system.
    pub residual: f64,
    pub beta: f64,
    pub method: Method,
    pub iterations: usize,
    /// Number of clipped undershoots during marching.
    pub clip_events: usize,
}

impl SteadyState {
    pub fn sup_norm(&self) -> f64 {
        self.p.iter().chain(&self.q).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_p(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_q(&self) -> f64 {
        self.q.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sup (p + q) >= NONTRIVIAL_THRESHOLD`.
    pub fn is_nontrivial(&self) -> bool {
        self.p.iter().zip(&self.q).any(|(a, b)| a + b >= NONTRIVIAL_THRESHOLD)
    }

    pub fn is_positive(&self) -> bool {
        self.min_p() > 0.0 && self.min_q() > 0.0
    }

    /// `max(p, q) <= c_box (1 + rel)`.
    pub fn within_box(&self, c_box: f64, rel: f64) -> bool {
        self.sup_norm() <= c_box * (1.0 + rel)
    }

    pub fn distance(&self, other: &SteadyState) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .chain(self.q.iter().zip(&other.q))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `max(p / q, q / p)` over the grid.
    pub fn max_ratio(&self) -> f64 {
        self.p.iter().zip(&self.q).map(|(&a, &b)| (a / b).max(b / a)).fold(1.0, f64::max)
    }

    /// `max(p + q)`.
    pub fn max_sum(&self) -> f64 {
        self.p.iter().zip(&self.q).map(|(a, b)| a + b).fold(0.0, f64::max)
    }
}

/// Result of marching to equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub enum MarchOutcome {
    Converged(SteadyState),
    /// `sup (p + q)` fell below `COLLAPSE_THRESHOLD`.
    CollapsedToZero { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchOptions {
    /// Time step; `None` picks `0.01 min(1, 1 / r_inf)`.
    pub dt: Option<f64>,
    pub t_max: f64,
    /// Floor on the sup-norm of the time derivative.
    pub tol: f64,
    /// Report collapse as an outcome rather than an error.
    pub allow_extinction: bool,
}

impl Default for MarchOptions {
    fn default() -> Self {
        Self { dt: None, t_max: 5000.0, tol: 1e-10, allow_extinction: false }
    }
}

/// Default march step `0.01 min(1, 1 / r_inf)`.
pub fn default_march_dt(field: &CoefficientField) -> f64 {
    let r_inf = field.bounds().r_inf;
    0.01 * if r_inf > 1.0 { 1.0 / r_inf } else { 1.0 }
}

/// Sup-norm of `D2 z + f(z)` on the periodic grid.
pub fn stationary_residual(s: &FieldSamples, h: f64, p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    let h2 = h * h;
    let mut res = 0.0f64;
    for j in 0..n {
        let (jm, jp) = (if j == 0 { n - 1 } else { j - 1 }, if j + 1 == n { 0 } else { j + 1 });
        let f = s.reaction(j, p[j], q[j]);
        let rp = (p[jp] - 2.0 * p[j] + p[jm]) / h2 + f[0];
        let rq = (q[jp] - 2.0 * q[j] + q[jm]) / h2 + f[1];
        res = res.max(rp.abs()).max(rq.abs());
    }
    res
}

/// Marches the periodic parabolic system to equilibrium with implicit
/// diffusion and explicit reaction.
pub fn steady_time_march(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    p0: &[f64],
    q0: &[f64],
    opts: &MarchOptions,
) -> Result<MarchOutcome, SteadyError> {
    let n = grid.len();
    if p0.len() != n || q0.len() != n {
        return Err(SteadyError::BadInput(format!("initial data length {} / {}, grid {n}", p0.len(), q0.len())));
    }
    if p0.iter().chain(q0).any(|v| !(*v >= 0.0)) || p0.iter().chain(q0).all(|v| *v == 0.0) {
        return Err(SteadyError::BadInput("initial data must be nonnegative and not identically zero".into()));
    }
    let dt = opts.dt.unwrap_or_else(|| default_march_dt(field));
    let h = grid.spacing();
    let s = field.sample(grid);
    let a = dt / (h * h);
    let lu = CyclicTridiagLu::factor(&vec![-a; n], &vec![1.0 + 2.0 * a; n], &vec![-a; n])
        .map_err(|e| SteadyError::BadInput(e.to_string()))?;
    let (mut p, mut q) = (p0.to_vec(), q0.to_vec());
    let (mut np, mut nq) = (vec![0.0; n], vec![0.0; n]);
    let mut clip_events = 0;
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut derivative = f64::INFINITY;
    while t < opts.t_max {
        for j in 0..n {
            let f = s.reaction(j, p[j], q[j]);
            np[j] = p[j] + dt * f[0];
            nq[j] = q[j] + dt * f[1];
        }
        lu.solve(&mut np);
        lu.solve(&mut nq);
        for v in np.iter_mut().chain(nq.iter_mut()) {
            if *v < CLIP_THRESHOLD {
                clip_events += 1;
                *v = 0.0;
            }
        }
        derivative = 0.0;
        let mut sup = 0.0f64;
        for j in 0..n {
            derivative = derivative.max((np[j] - p[j]).abs()).max((nq[j] - q[j]).abs());
            sup = sup.max(np[j] + nq[j]);
        }
        derivative /= dt;
        std::mem::swap(&mut p, &mut np);
        std::mem::swap(&mut q, &mut nq);
        t += dt;
        steps += 1;
        if sup < COLLAPSE_THRESHOLD {
            return if opts.allow_extinction {
                Ok(MarchOutcome::CollapsedToZero { t })
            } else {
                Err(SteadyError::CollapsedToZero { t })
            };
        }
        if derivative < opts.tol {
            if sup < NONTRIVIAL_THRESHOLD {
                // Settled only because the decay itself is slow in absolute terms.
                return if opts.allow_extinction {
                    Ok(MarchOutcome::CollapsedToZero { t })
                } else {
                    Err(SteadyError::CollapsedToZero { t })
                };
            }
            let residual = stationary_residual(&s, h, &p, &q);
            return Ok(MarchOutcome::Converged(SteadyState {
                x: grid.nodes(),
                p,
                q,
                residual,
                beta: 0.0,
                method: Method::TimeMarch,
                iterations: steps,
                clip_events,
            }));
        }
    }
    Err(SteadyError::NotConverged { t_max: opts.t_max, derivative })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// First trial step length of the damped update, in `(0, 1]`.
    pub damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 60, damping: 1.0 }
    }
}

fn residual_vector(s: &FieldSamples, h: f64, z: &[Vec2]) -> Vec<Vec2> {
    let n = z.len();
    let h2 = h * h;
    (0..n)
        .map(|j| {
            let (jm, jp) = (if j == 0 { n - 1 } else { j - 1 }, if j + 1 == n { 0 } else { j + 1 });
            let f = s.reaction(j, z[j][0], z[j][1]);
            [
                (z[jp][0] - 2.0 * z[j][0] + z[jm][0]) / h2 + f[0],
                (z[jp][1] - 2.0 * z[j][1] + z[jm][1]) / h2 + f[1],
            ]
        })
        .collect()
}

fn sup2(v: &[Vec2]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a[0].abs()).max(a[1].abs()))
}

fn jacobian(s: &FieldSamples, h: f64, z: &[Vec2]) -> BlockTridiag {
    let n = z.len();
    let h2 = h * h;
    let off = Block2::scalar(1.0 / h2);
    let diag = (0..n)
        .map(|j| {
            let (p, q) = (z[j][0], z[j][1]);
            let (gu, gv, mu) = (s.gamma_u[j], s.gamma_v[j], s.mu[j]);
            Block2::new(
                -2.0 / h2 + s.r_u[j] - 2.0 * gu * p - gu * q - mu,
                -gu * p + mu,
                -gv * q + mu,
                -2.0 / h2 + s.r_v[j] - gv * p - 2.0 * gv * q - mu,
            )
        })
        .collect();
    BlockTridiag { lower: vec![off; n], diag, upper: vec![off; n], cyclic: true }
}

/// Damped Newton on the discrete stationary system.
///
/// Converges when the residual is below `tol`, or when the update is at
/// roundoff level and the residual is within the floor set by evaluating the
/// second difference in floating point (`64 eps |z| 4 / h^2`).
pub fn steady_newton(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    p0: &[f64],
    q0: &[f64],
    opts: &NewtonOptions,
) -> Result<SteadyState, SteadyError> {
    let n = grid.len();
    if p0.len() != n || q0.len() != n {
        return Err(SteadyError::BadInput("guess length does not match grid".into()));
    }
    if p0.iter().chain(q0).any(|v| !(*v > 0.0)) {
        return Err(SteadyError::BadInput("Newton guess must be strictly positive".into()));
    }
    let h = grid.spacing();
    let s = field.sample(grid);
    let mut z: Vec<Vec2> = p0.iter().zip(q0).map(|(&a, &b)| [a, b]).collect();
    let mut f = residual_vector(&s, h, &z);
    let mut res = sup2(&f);
    let mut last_step = f64::INFINITY;
    for it in 0..=opts.max_iter {
        let scale = sup2(&z).max(1.0);
        let floor = opts.tol.max(64.0 * f64::EPSILON * scale * 4.0 / (h * h));
        if res <= opts.tol || (res <= floor && last_step <= 1e-12 * scale) {
            let state = SteadyState {
                x: grid.nodes(),
                p: z.iter().map(|v| v[0]).collect(),
                q: z.iter().map(|v| v[1]).collect(),
                residual: res,
                beta: 0.0,
                method: Method::Newton,
                iterations: it,
                clip_events: 0,
            };
            return if state.is_nontrivial() { Ok(state) } else { Err(SteadyError::ConvergedToTrivial) };
        }
        if it == opts.max_iter {
            break;
        }
        let lu = BlockTridiagLu::factor(&jacobian(&s, h, &z)).map_err(SteadyError::JacobianSingular)?;
        let mut delta: Vec<Vec2> = f.iter().map(|v| [-v[0], -v[1]]).collect();
        lu.solve(&mut delta);
        if delta.iter().any(|d| !d[0].is_finite() || !d[1].is_finite()) {
            return Err(SteadyError::Diverged { iterations: it, residual: res });
        }
        let mut t = opts.damping.clamp(1e-3, 1.0);
        loop {
            let trial: Vec<Vec2> = z.iter().zip(&delta).map(|(a, d)| [a[0] + t * d[0], a[1] + t * d[1]]).collect();
            let ft = residual_vector(&s, h, &trial);
            let rt = sup2(&ft);
            if rt < (1.0 - 0.25 * t) * res || (rt <= res && res <= floor) {
                z = trial;
                f = ft;
                res = rt;
                last_step = t * sup2(&delta);
                break;
            }
            t *= 0.5;
            if t < 1.0 / 4096.0 {
                return Err(SteadyError::Diverged { iterations: it, residual: res });
            }
        }
    }
    Err(SteadyError::Diverged { iterations: opts.max_iter, residual: res })
}

/// Distinct nontrivial states found by Newton from `n_starts` seeded random
/// smooth positive guesses, plus the number of starts that failed.
#[derive(Debug, Clone)]
pub struct MultiStart {
    pub states: Vec<SteadyState>,
    /// For each start, the index into `states` it converged to.
    pub assignment: Vec<Option<usize>>,
    pub failures: usize,
}

pub fn multistart_newton(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    n_starts: usize,
    seed: u64,
    separation: f64,
    opts: &NewtonOptions,
) -> MultiStart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c_box = field.bounds().steady_box();
    let period = grid.period();
    let mut out = MultiStart { states: Vec::new(), assignment: Vec::new(), failures: 0 };
    for _ in 0..n_starts {
        let guess = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let base = c_box * rng.gen_range(0.05..1.5);
            let modes: Vec<(f64, f64)> =
                (0..3).map(|_| (rng.gen_range(-0.3..0.3) * base, rng.gen_range(0.0..std::f64::consts::TAU))).collect();
            grid.nodes()
                .iter()
                .map(|&x| {
                    let th = std::f64::consts::TAU * x / period;
                    let v = modes.iter().enumerate().fold(base, |acc, (k, (a, ph))| acc + a * ((k + 1) as f64 * th + ph).cos());
                    v.max(1e-3 * base)
                })
                .collect()
        };
        let p0 = guess(&mut rng);
        let q0 = guess(&mut rng);
        match steady_newton(field, grid, &p0, &q0, opts) {
            Ok(state) => {
                let k = out.states.iter().position(|s| s.distance(&state) <= separation);
                let k = k.unwrap_or_else(|| {
                    out.states.push(state);
                    out.states.len() - 1
                });
                out.assignment.push(Some(k));
            }
            Err(_) => {
                out.failures += 1;
                out.assignment.push(None);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub beta: f64,
    pub norm: f64,
    pub steady: SteadyState,
}

/// Natural-parameter continuation in `beta` starting just past the
/// bifurcation point `beta = lambda_1`.
///
/// The first guess is `t Phi` with `Phi` the principal eigenvector and `t`
/// from projecting the shifted system onto `Phi`. Each later step starts
/// from the previous state rescaled by `(beta - lambda_1) / (beta_prev - lambda_1)`,
/// the growth of the amplitude near the bifurcation; a failed step is retried after up to three
/// halvings. `beta = 0` is added to the grid when it lies in range.
pub fn continuation_branch(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    beta_lo: f64,
    beta_hi: f64,
    n_steps: usize,
    eig_opts: &EigenOptions,
    opts: &NewtonOptions,
) -> Result<Vec<BranchPoint>, SteadyError> {
    let eig = periodic_principal_eig(field, grid, 0.0, 0.0, eig_opts)?;
    let lambda1 = eig.lambda;
    if !(beta_lo > lambda1) || !(beta_hi > beta_lo) || n_steps < 1 {
        return Err(SteadyError::BadInput(format!(
            "need lambda1 = {lambda1} < beta_lo = {beta_lo} < beta_hi = {beta_hi}"
        )));
    }
    let mut betas: Vec<f64> = (0..=n_steps).map(|i| beta_lo + (beta_hi - beta_lo) * i as f64 / n_steps as f64).collect();
    if beta_lo < 0.0 && beta_hi > 0.0 && !betas.contains(&0.0) {
        betas.push(0.0);
        betas.sort_by(|a, b| a.total_cmp(b));
    }
    let s = field.sample(grid);
    let (phi, psi) = (&eig.phi, &eig.psi);
    let (mut pp, mut pn) = (0.0, 0.0);
    for j in 0..phi.len() {
        let sum = phi[j] + psi[j];
        pp += phi[j] * phi[j] + psi[j] * psi[j];
        pn += phi[j] * s.gamma_u[j] * phi[j] * sum + psi[j] * s.gamma_v[j] * psi[j] * sum;
    }
    let amplitude = |beta: f64| (beta - lambda1) * pp / pn;

    let solve_at = |beta: f64, p: &[f64], q: &[f64]| -> Result<SteadyState, SteadyError> {
        let mut st = steady_newton(&field.shifted(beta), grid, p, q, opts)?;
        st.beta = beta;
        Ok(st)
    };
    let t0 = amplitude(betas[0]);
    let first_p: Vec<f64> = phi.iter().map(|v| t0 * v).collect();
    let first_q: Vec<f64> = psi.iter().map(|v| t0 * v).collect();
    let first = solve_at(betas[0], &first_p, &first_q).map_err(|_| SteadyError::BranchLost { beta: betas[0] })?;
    let mut out = vec![BranchPoint { beta: betas[0], norm: first.sup_norm(), steady: first }];
    for &target in &betas[1..] {
        let mut from = out.last().unwrap().beta;
        let mut step = target - from;
        let mut halvings = 0;
        while from < target {
            let beta = (from + step).min(target);
            let prev = &out.last().unwrap();
            let scale = (beta - lambda1) / (prev.beta - lambda1);
            let p: Vec<f64> = prev.steady.p.iter().map(|v| v * scale).collect();
            let q: Vec<f64> = prev.steady.q.iter().map(|v| v * scale).collect();
            match solve_at(beta, &p, &q) {
                // Points reached after a halving stay on the branch as well.
                Ok(st) => {
                    out.push(BranchPoint { beta, norm: st.sup_norm(), steady: st });
                    from = beta;
                }
                Err(_) if halvings < 3 => {
                    halvings += 1;
                    step *= 0.5;
                }
                Err(_) => return Err(SteadyError::BranchLost { beta }),
            }
        }
    }
    Ok(out)
}
