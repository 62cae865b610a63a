//! The cooperative wave-frame problem on the strip `(-a, a) x [0, L)`:
//!
//! ```text
//! L_eps u - c u_s = u (r_u - gamma_u (u + q/K)) + mu (v - u)
//! L_eps v - c v_s = v (r_v - gamma_v (p/K + v)) + mu (u - v)
//! (u, v)(-a, x) = (K p, K q),  (u, v)(a, x) = 0,  L-periodic in x
//! ```
//!
//! with `L_eps = -d_xx - 2 d_xs - (1 + eps) d_ss` and `(p, q)` the periodic
//! steady state. Solutions come from monotone iteration downward from the
//! supersolution `(K p, K q)`.
//!
//! Discretization: `L_eps = -(d_x + d_s)^2 - eps d_ss`, and the first part is
//! a second difference along the grid diagonal. With `h_s = h_x` every
//! off-diagonal entry is nonpositive as long as `|c| h <= 2 eps`, so the
//! assembled matrix is an M-matrix.

use rayon::join;
use thiserror::Error;

use crate::fields::{CoefficientField, FieldSamples};
use crate::grid::PeriodicGrid;
use crate::linalg::{BandedLu, BandedMatrix, LinalgError};
use crate::spectral::{dispersion_curve, periodic_principal_eig, DispersionOptions, EigenOptions, SpectralError};
use crate::steady::{steady_newton, steady_time_march, MarchOptions, MarchOutcome, NewtonOptions, SteadyError, SteadyState};

/// Smallest strip grid accepted in either direction.
pub const MIN_STRIP_NODES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StripError {
    #[error("stencil not monotone: |c| h = {ch} exceeds 2 eps = {limit}; need |c| <= {c_max}")]
    StencilNotMonotone { ch: f64, limit: f64, c_max: f64 },
    #[error("strip grid too small: n_s = {n_s}, n_x = {n_x} (need >= {MIN_STRIP_NODES})")]
    GridTooSmall { n_s: usize, n_x: usize },
    #[error("monotone iteration stalled after {sweeps} sweeps (step {step:e})")]
    IterationStalled { sweeps: usize, step: f64 },
    #[error("iterate increased by {increase:e} even after {doublings} penalty doublings")]
    MonotonicityBroken { increase: f64, doublings: usize },
    #[error("speeds never bracket nu = {nu}: norm({c_lo}) = {norm_lo}, norm({c_hi}) = {norm_hi}")]
    BracketFailure { nu: f64, c_lo: f64, norm_lo: f64, c_hi: f64, norm_hi: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
}

/// Uniform grid on `[-a, a] x [0, L)` with equal spacing in both directions.
///
/// Rows `i = 0..n_s` are s-levels `s_i = -a + i h`; rows `0` and `n_s - 1`
/// carry the Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripGrid {
    half_width: f64,
    n_s: usize,
    n_x: usize,
    period: f64,
}

impl StripGrid {
    /// Spacing `h = L / n_x`; `a` is rounded to the nearest half multiple of `h`.
    pub fn new(target_half_width: f64, n_x: usize, period: f64) -> Result<Self, StripError> {
        let h = period / n_x as f64;
        let cells = (2.0 * target_half_width / h).round().max(1.0) as usize;
        let n_s = cells + 1;
        if n_s < MIN_STRIP_NODES || n_x < MIN_STRIP_NODES {
            return Err(StripError::GridTooSmall { n_s, n_x });
        }
        Ok(Self { half_width: 0.5 * cells as f64 * h, n_s, n_x, period })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n_x as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn x_grid(&self) -> PeriodicGrid {
        PeriodicGrid::new(self.n_x, self.period).expect("n_x validated at construction")
    }

    fn n_unknowns(&self) -> usize {
        (self.n_s - 2) * self.n_x
    }

    /// Largest `|c|` for which the stencil keeps its sign pattern.
    pub fn max_speed(&self, epsilon: f64) -> f64 {
        2.0 * epsilon / self.spacing()
    }
}

/// Stencil weights of `L_eps - c d_s` at an interior node.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    centre: f64,
    /// `(i+1, j+1)` and `(i-1, j-1)`.
    diagonal: f64,
    /// `(i+1, j)`.
    up: f64,
    /// `(i-1, j)`.
    down: f64,
}

fn stencil(grid: &StripGrid, epsilon: f64, c: f64) -> Result<Stencil, StripError> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(StripError::Precondition(format!("epsilon = {epsilon} outside (0, 1]")));
    }
    let h = grid.spacing();
    let ch = c.abs() * h;
    if ch > 2.0 * epsilon {
        return Err(StripError::StencilNotMonotone { ch, limit: 2.0 * epsilon, c_max: grid.max_speed(epsilon) });
    }
    let h2 = h * h;
    Ok(Stencil {
        centre: (2.0 + 2.0 * epsilon) / h2,
        diagonal: -1.0 / h2,
        up: -epsilon / h2 - c / (2.0 * h),
        down: -epsilon / h2 + c / (2.0 * h),
    })
}

/// Banded matrix of `L_eps - c d_s` on the interior unknowns, s-major
/// ordering `k = (i - 1) n_x + j`. Boundary rows are eliminated.
pub fn assemble_leps(grid: &StripGrid, epsilon: f64, c: f64) -> Result<BandedMatrix, StripError> {
    let st = stencil(grid, epsilon, c)?;
    let (n_x, rows) = (grid.n_x, grid.n_s - 2);
    let mut m = BandedMatrix::zeros(grid.n_unknowns(), n_x + 1);
    for r in 0..rows {
        for j in 0..n_x {
            let k = r * n_x + j;
            m.add(k, k, st.centre);
            let (jp, jm) = ((j + 1) % n_x, (j + n_x - 1) % n_x);
            if r + 1 < rows {
                m.add(k, (r + 1) * n_x + jp, st.diagonal);
                m.add(k, (r + 1) * n_x + j, st.up);
            }
            if r > 0 {
                m.add(k, (r - 1) * n_x + jm, st.diagonal);
                m.add(k, (r - 1) * n_x + j, st.down);
            }
        }
    }
    Ok(m)
}

/// `(L_eps - c d_s) w` at every interior node for a full array `w`
/// (`n_s x n_x`, boundary rows included).
pub fn apply_leps(grid: &StripGrid, epsilon: f64, c: f64, w: &[f64]) -> Result<Vec<f64>, StripError> {
    let st = stencil(grid, epsilon, c)?;
    let n_x = grid.n_x;
    let mut out = Vec::with_capacity(grid.n_unknowns());
    for i in 1..grid.n_s - 1 {
        for j in 0..n_x {
            let (jp, jm) = ((j + 1) % n_x, (j + n_x - 1) % n_x);
            out.push(
                st.centre * w[i * n_x + j]
                    + st.diagonal * (w[(i + 1) * n_x + jp] + w[(i - 1) * n_x + jm])
                    + st.up * w[(i + 1) * n_x + j]
                    + st.down * w[(i - 1) * n_x + j],
            );
        }
    }
    Ok(out)
}

/// Coefficients, steady state and amplification factor of one strip problem.
#[derive(Debug, Clone)]
pub struct StripProblem {
    pub grid: StripGrid,
    pub samples: FieldSamples,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub epsilon: f64,
    pub k: f64,
}

impl StripProblem {
    pub fn new(
        field: &CoefficientField,
        grid: StripGrid,
        steady: &SteadyState,
        epsilon: f64,
        k: f64,
    ) -> Result<Self, StripError> {
        if steady.p.len() != grid.n_x {
            return Err(StripError::Precondition(format!(
                "steady state has {} nodes, strip grid {}",
                steady.p.len(),
                grid.n_x
            )));
        }
        if !steady.is_positive() {
            return Err(StripError::Precondition("steady state must be positive".into()));
        }
        if !(k > 0.0) {
            return Err(StripError::Precondition(format!("K = {k} must be positive")));
        }
        Ok(Self {
            samples: field.sample(&grid.x_grid()),
            grid,
            p: steady.p.clone(),
            q: steady.q.clone(),
            epsilon,
            k,
        })
    }

    /// `f(x_j, (u, v))` of the cooperative problem.
    #[inline]
    fn reaction(&self, j: usize, u: f64, v: f64) -> [f64; 2] {
        let s = &self.samples;
        let m = s.mu[j] * (v - u);
        [
            u * (s.r_u[j] - s.gamma_u[j] * (u + self.q[j] / self.k)) + m,
            v * (s.r_v[j] - s.gamma_v[j] * (self.p[j] / self.k + v)) - m,
        ]
    }

    /// `-d f_u / d u` and `-d f_v / d v`.
    #[inline]
    fn neg_diag_derivative(&self, j: usize, u: f64, v: f64) -> [f64; 2] {
        let s = &self.samples;
        [
            s.gamma_u[j] * (2.0 * u + self.q[j] / self.k) + s.mu[j] - s.r_u[j],
            s.gamma_v[j] * (2.0 * v + self.p[j] / self.k) + s.mu[j] - s.r_v[j],
        ]
    }

    /// `C = max(2 r_inf / gamma0, K max(p + q))`, the a priori bound on `u + v`.
    pub fn upper_bound(&self) -> f64 {
        let s = &self.samples;
        let r_inf = s.r_u.iter().chain(&s.r_v).copied().fold(f64::NEG_INFINITY, f64::max);
        let g0 = s.gamma_u.iter().chain(&s.gamma_v).copied().fold(f64::INFINITY, f64::min);
        let max_sum = self.p.iter().zip(&self.q).map(|(a, b)| a + b).fold(0.0, f64::max);
        (2.0 * r_inf / g0).max(self.k * max_sum)
    }

    /// Constant penalty making `f + M Id` nondecreasing on `[0, C]^2`:
    /// `max(0, -r0) + mu_inf + gamma_inf (2 C + max(p, q) / K)`.
    pub fn constant_penalty(&self) -> f64 {
        let s = &self.samples;
        let r0 = s.r_u.iter().chain(&s.r_v).copied().fold(f64::INFINITY, f64::min);
        let mu_inf = s.mu.iter().copied().fold(0.0, f64::max);
        let g_inf = s.gamma_u.iter().chain(&s.gamma_v).copied().fold(0.0, f64::max);
        let pq = self.p.iter().chain(&self.q).copied().fold(0.0, f64::max);
        (-r0).max(0.0) + mu_inf + g_inf * (2.0 * self.upper_bound() + pq / self.k)
    }

    /// The supersolution `(K p, K q)` extended constantly in s, with the
    /// Dirichlet rows set.
    pub fn supersolution(&self) -> (Vec<f64>, Vec<f64>) {
        let (n_s, n_x) = (self.grid.n_s, self.grid.n_x);
        let mut u = vec![0.0; n_s * n_x];
        let mut v = vec![0.0; n_s * n_x];
        for i in 0..n_s - 1 {
            for j in 0..n_x {
                u[i * n_x + j] = self.k * self.p[j];
                v[i * n_x + j] = self.k * self.q[j];
            }
        }
        (u, v)
    }
}

/// Linear step used in the monotone iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// Coupled linearization: `M = -d_u f(w_n)` refreshed every sweep with the
    /// `mu` cross terms implicit. The nonlinearity is concave and cooperative,
    /// so these steps decrease monotonically while `L - f'(w_n)` is an
    /// M-matrix. Any violation falls back to `Adaptive`.
    Newton,
    /// Decoupled components, node-wise `M = max(0, -d_u f(w_n))` refreshed
    /// every few sweeps. The iterates decrease and `-d_u f` is increasing in
    /// `u`, so an older `M` stays large enough for every later iterate.
    Adaptive,
    /// Decoupled components with a single constant valid on `[0, C]^2`.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    /// Stop when the sup-norm of the update falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Give up when the update has not improved for this many sweeps.
    pub stall_window: usize,
    pub penalty: Penalty,
    /// Sweeps between refreshes of the adaptive penalty.
    pub refactor_every: usize,
    /// Increases above this break the monotone certificate.
    pub increase_tol: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 20_000,
            stall_window: 50,
            penalty: Penalty::Newton,
            refactor_every: 10,
            increase_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneCertificate {
    /// Largest pointwise increase between consecutive iterates.
    pub max_iterate_increase: f64,
    pub iterates_nonincreasing: bool,
    /// Largest forward difference in s of the final `u` or `v`.
    pub max_s_increase: f64,
    pub s_monotone: bool,
    /// `0 < u < K p` and `0 < v < K q` at all interior nodes.
    pub within_bounds: bool,
}

/// Solution on the full grid (`n_s x n_x`, s-major, boundary rows included).
#[derive(Debug, Clone)]
pub struct StripSolution {
    pub grid: StripGrid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub c: f64,
    pub epsilon: f64,
    pub k: f64,
    pub iterations: usize,
    /// Scheme that produced the solution (after any fallback).
    pub scheme: Penalty,
    pub penalty_doublings: usize,
    pub certificate: MonotoneCertificate,
}

impl StripSolution {
    /// `max (u + v)` over nodes with `|s| <= a0`.
    pub fn window_norm(&self, a0: f64) -> f64 {
        let n_x = self.grid.n_x;
        let tol = 1e-9 * self.grid.spacing();
        let mut best = 0.0f64;
        for i in 0..self.grid.n_s {
            if self.grid.s(i).abs() <= a0 + tol {
                for j in 0..n_x {
                    let k = i * n_x + j;
                    best = best.max(self.u[k] + self.v[k]);
                }
            }
        }
        best
    }

    /// Largest `w_self - w_other` over both components.
    pub fn max_excess_over(&self, other: &StripSolution) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b))
    }
}

fn certificate(problem: &StripProblem, u: &[f64], v: &[f64], max_increase: f64, opts: &IterationOptions) -> MonotoneCertificate {
    let (n_s, n_x) = (problem.grid.n_s, problem.grid.n_x);
    let mut max_s_increase = f64::NEG_INFINITY;
    let mut within = true;
    for i in 0..n_s - 1 {
        for j in 0..n_x {
            let (k, kn) = (i * n_x + j, (i + 1) * n_x + j);
            max_s_increase = max_s_increase.max(u[kn] - u[k]).max(v[kn] - v[k]);
            if i > 0 {
                let (kp, kq) = (problem.k * problem.p[j], problem.k * problem.q[j]);
                if !(u[k] > 0.0 && u[k] < kp && v[k] > 0.0 && v[k] < kq) {
                    within = false;
                }
            }
        }
    }
    MonotoneCertificate {
        max_iterate_increase: max_increase,
        iterates_nonincreasing: max_increase <= opts.increase_tol,
        max_s_increase,
        s_monotone: max_s_increase <= 1e-10,
        within_bounds: within,
    }
}

fn factor_with_penalty(base: &BandedMatrix, m: &[f64]) -> Result<BandedLu, LinalgError> {
    let mut a = base.clone();
    for (k, &mk) in m.iter().enumerate() {
        a.add(k, k, mk);
    }
    BandedLu::factor(a)
}

/// Coupled matrix `L - c d_s - f'(w)` on interleaved unknowns `(u_k, v_k)`.
fn newton_factor(problem: &StripProblem, st: &Stencil, u: &[f64], v: &[f64]) -> Result<BandedLu, LinalgError> {
    let (n_x, rows) = (problem.grid.n_x, problem.grid.n_s - 2);
    let mut m = BandedMatrix::zeros(2 * rows * n_x, 2 * n_x + 2);
    for r in 0..rows {
        for j in 0..n_x {
            let k = r * n_x + j;
            let kk = k + n_x;
            let d = problem.neg_diag_derivative(j, u[kk], v[kk]);
            let mu = problem.samples.mu[j];
            let (jp, jm) = ((j + 1) % n_x, (j + n_x - 1) % n_x);
            for comp in 0..2 {
                let row = 2 * k + comp;
                m.add(row, row, st.centre + d[comp]);
                m.add(row, 2 * k + 1 - comp, -mu);
                if r + 1 < rows {
                    m.add(row, 2 * ((r + 1) * n_x + jp) + comp, st.diagonal);
                    m.add(row, 2 * ((r + 1) * n_x + j) + comp, st.up);
                }
                if r > 0 {
                    m.add(row, 2 * ((r - 1) * n_x + jm) + comp, st.diagonal);
                    m.add(row, 2 * ((r - 1) * n_x + j) + comp, st.down);
                }
            }
        }
    }
    BandedLu::factor(m)
}

/// Stencil contributions of the Dirichlet rows to interior node `(i, j)`.
#[inline]
fn boundary_terms(grid: &StripGrid, st: &Stencil, w: &[f64], i: usize, j: usize) -> f64 {
    let (n_s, n_x) = (grid.n_s, grid.n_x);
    let mut b = 0.0;
    if i == 1 {
        b -= st.diagonal * w[(j + n_x - 1) % n_x] + st.down * w[j];
    }
    if i == n_s - 2 {
        let top = (n_s - 1) * n_x;
        b -= st.diagonal * w[top + (j + 1) % n_x] + st.up * w[top + j];
    }
    b
}

struct Iterated {
    u: Vec<f64>,
    v: Vec<f64>,
    sweeps: usize,
    max_increase: f64,
}

fn iterate(
    problem: &StripProblem,
    c: f64,
    initial: &(Vec<f64>, Vec<f64>),
    scheme: Penalty,
    multiplier: f64,
    opts: &IterationOptions,
) -> Result<Iterated, StripError> {
    let grid = problem.grid;
    let st = stencil(&grid, problem.epsilon, c)?;
    let base = match scheme {
        Penalty::Newton => None,
        _ => Some(assemble_leps(&grid, problem.epsilon, c)?),
    };
    let (n_s, n_x) = (grid.n_s, grid.n_x);
    let n = grid.n_unknowns();
    let (mut u, mut v) = initial.clone();
    let mut max_increase = f64::NEG_INFINITY;
    let mut best_step = f64::INFINITY;
    let mut since_best = 0;
    let mut factors: Option<(BandedLu, BandedLu, Vec<f64>, Vec<f64>)> = None;
    for sweep in 0..opts.max_sweeps {
        let (bu, bv) = if scheme == Penalty::Newton {
            let lu = newton_factor(problem, &st, &u, &v)?;
            let mut b = vec![0.0; 2 * n];
            for i in 1..n_s - 1 {
                for j in 0..n_x {
                    let kk = i * n_x + j;
                    let k = kk - n_x;
                    let f = problem.reaction(j, u[kk], v[kk]);
                    let d = problem.neg_diag_derivative(j, u[kk], v[kk]);
                    let mu = problem.samples.mu[j];
                    b[2 * k] = f[0] - mu * v[kk] + d[0] * u[kk] + boundary_terms(&grid, &st, &u, i, j);
                    b[2 * k + 1] = f[1] - mu * u[kk] + d[1] * v[kk] + boundary_terms(&grid, &st, &v, i, j);
                }
            }
            lu.solve(&mut b);
            let bu = b.iter().step_by(2).copied().collect::<Vec<_>>();
            let bv = b.iter().skip(1).step_by(2).copied().collect::<Vec<_>>();
            (bu, bv)
        } else {
            let refresh = match scheme {
                Penalty::Adaptive => factors.is_none() || sweep < 5 || sweep % opts.refactor_every.max(1) == 0,
                _ => factors.is_none(),
            };
            if refresh {
                let (mut mu_pen, mut mv_pen) = (vec![0.0; n], vec![0.0; n]);
                for k in 0..n {
                    let (kk, j) = (k + n_x, k % n_x);
                    let d = match scheme {
                        Penalty::Constant(m) => [m, m],
                        _ => problem.neg_diag_derivative(j, u[kk], v[kk]).map(|x| x.max(0.0)),
                    };
                    mu_pen[k] = multiplier * d[0];
                    mv_pen[k] = multiplier * d[1];
                }
                let base = base.as_ref().unwrap();
                let (lu_u, lu_v) = join(|| factor_with_penalty(base, &mu_pen), || factor_with_penalty(base, &mv_pen));
                factors = Some((lu_u?, lu_v?, mu_pen, mv_pen));
            }
            let (lu_u, lu_v, mu_pen, mv_pen) = factors.as_ref().unwrap();
            let (mut bu, mut bv) = (vec![0.0; n], vec![0.0; n]);
            for i in 1..n_s - 1 {
                for j in 0..n_x {
                    let kk = i * n_x + j;
                    let k = kk - n_x;
                    let f = problem.reaction(j, u[kk], v[kk]);
                    bu[k] = f[0] + mu_pen[k] * u[kk] + boundary_terms(&grid, &st, &u, i, j);
                    bv[k] = f[1] + mv_pen[k] * v[kk] + boundary_terms(&grid, &st, &v, i, j);
                }
            }
            join(|| lu_u.solve(&mut bu), || lu_v.solve(&mut bv));
            (bu, bv)
        };
        let mut step = 0.0f64;
        let mut increase = f64::NEG_INFINITY;
        for k in 0..n {
            let kk = k + n_x;
            let (du, dv) = (bu[k] - u[kk], bv[k] - v[kk]);
            step = step.max(du.abs()).max(dv.abs());
            increase = increase.max(du).max(dv);
            u[kk] = bu[k];
            v[kk] = bv[k];
        }
        if !(increase <= opts.increase_tol) {
            return Err(StripError::MonotonicityBroken { increase, doublings: 0 });
        }
        max_increase = max_increase.max(increase);
        if step < opts.tol {
            return Ok(Iterated { u, v, sweeps: sweep + 1, max_increase });
        }
        if step < best_step * (1.0 - 1e-6) {
            best_step = step;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stall_window {
                return Err(StripError::IterationStalled { sweeps: sweep + 1, step });
            }
        }
    }
    Err(StripError::IterationStalled { sweeps: opts.max_sweeps, step: best_step })
}

/// Monotone iteration for one speed `c`.
///
/// Starts from `start` when given (it must be a supersolution, e.g. the
/// solution at a smaller speed), otherwise from `(K p, K q)`.
pub fn solve_cooperative(
    problem: &StripProblem,
    c: f64,
    start: Option<&StripSolution>,
    opts: &IterationOptions,
) -> Result<StripSolution, StripError> {
    let grid = problem.grid;
    let initial = match start {
        Some(s) if s.grid == grid => (s.u.clone(), s.v.clone()),
        _ => problem.supersolution(),
    };
    let finish = |it: Iterated, scheme: Penalty, doublings: usize| {
        let certificate = certificate(problem, &it.u, &it.v, it.max_increase, opts);
        StripSolution {
            grid,
            u: it.u,
            v: it.v,
            c,
            epsilon: problem.epsilon,
            k: problem.k,
            iterations: it.sweeps,
            scheme,
            penalty_doublings: doublings,
            certificate,
        }
    };
    let mut scheme = opts.penalty;
    if scheme == Penalty::Newton {
        match iterate(problem, c, &initial, scheme, 1.0, opts) {
            Ok(it) => return Ok(finish(it, scheme, 0)),
            Err(StripError::MonotonicityBroken { .. } | StripError::Linalg(_) | StripError::IterationStalled { .. }) => {
                scheme = Penalty::Adaptive;
            }
            Err(e) => return Err(e),
        }
    }
    let mut multiplier = 1.0;
    for doublings in 0..=8 {
        match iterate(problem, c, &initial, scheme, multiplier, opts) {
            Ok(it) => return Ok(finish(it, scheme, doublings)),
            Err(StripError::MonotonicityBroken { increase, .. }) if doublings == 8 => {
                return Err(StripError::MonotonicityBroken { increase, doublings });
            }
            Err(StripError::MonotonicityBroken { .. }) => multiplier *= 2.0,
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on its last pass")
}

/// Outcome of the speed search.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub solution: StripSolution,
    pub c_star: f64,
    pub nu: f64,
    pub a0: f64,
    /// Every `(c, window norm)` probe, in evaluation order.
    pub probes: Vec<(f64, f64)>,
    /// Window norm at `c = 0`.
    pub norm_at_zero: f64,
    /// Window norm at the initial upper speed.
    pub norm_at_upper: f64,
}

impl Normalized {
    /// Norms are nonincreasing when the probes are sorted by speed.
    pub fn probes_monotone(&self, slack: f64) -> bool {
        let mut sorted = self.probes.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        sorted.windows(2).all(|w| w[1].1 <= w[0].1 + slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationOptions {
    /// Tolerance on `|norm - nu|`.
    pub norm_tol: f64,
    pub max_bisections: usize,
    pub iteration: IterationOptions,
}

impl Default for NormalizationOptions {
    fn default() -> Self {
        Self { norm_tol: 1e-6, max_bisections: 60, iteration: IterationOptions::default() }
    }
}

/// Finds `c*` with `max_{|s| <= a0} (u + v) = nu` by safeguarded false position on `c`,
/// starting from the bracket `[0, c_upper]` and expanding it if needed.
pub fn solve_with_normalization(
    problem: &StripProblem,
    nu: f64,
    a0: f64,
    c_upper: f64,
    opts: &NormalizationOptions,
) -> Result<Normalized, StripError> {
    if !(nu > 0.0) || !(a0 > 0.0) || a0 >= problem.grid.half_width() {
        return Err(StripError::Precondition(format!("nu = {nu}, a0 = {a0}, a = {}", problem.grid.half_width())));
    }
    let c_max = 0.999 * problem.grid.max_speed(problem.epsilon);
    let mut probes = Vec::new();
    let mut run = |c: f64, start: Option<&StripSolution>| -> Result<StripSolution, StripError> {
        let s = solve_cooperative(problem, c, start, &opts.iteration)?;
        probes.push((c, s.window_norm(a0)));
        Ok(s)
    };

    let mut lo = run(0.0, None)?;
    let norm_at_zero = lo.window_norm(a0);
    while lo.window_norm(a0) <= nu {
        let c = if lo.c == 0.0 { -1.0 } else { 2.0 * lo.c };
        if c < -c_max {
            return Err(StripError::BracketFailure {
                nu,
                c_lo: lo.c,
                norm_lo: lo.window_norm(a0),
                c_hi: c_upper,
                norm_hi: f64::NAN,
            });
        }
        lo = run(c, None)?;
    }
    let mut hi = run(c_upper.min(c_max), Some(&lo))?;
    let norm_at_upper = hi.window_norm(a0);
    while hi.window_norm(a0) >= nu {
        let c = 2.0 * hi.c.max(0.5);
        if c > c_max {
            return Err(StripError::BracketFailure {
                nu,
                c_lo: lo.c,
                norm_lo: lo.window_norm(a0),
                c_hi: hi.c,
                norm_hi: hi.window_norm(a0),
            });
        }
        hi = run(c, Some(&lo))?;
    }
    // Illinois false position on `ln(norm / nu)`, which is close to linear
    // in `c`, with a midpoint step whenever the secant point lands near an
    // end of the bracket.
    let gap = |s: &StripSolution| (s.window_norm(a0) / nu).ln();
    let (mut g_lo, mut g_hi) = (gap(&lo), gap(&hi));
    let mut last_side = 0i8;
    for _ in 0..opts.max_bisections {
        let width = hi.c - lo.c;
        let secant = lo.c + width * g_lo / (g_lo - g_hi);
        let c = if secant.is_finite() && secant > lo.c + 1e-3 * width && secant < hi.c - 1e-3 * width {
            secant
        } else {
            0.5 * (lo.c + hi.c)
        };
        let mid = run(c, Some(&lo))?;
        let g = gap(&mid);
        if (mid.window_norm(a0) - nu).abs() <= opts.norm_tol {
            return Ok(Normalized { c_star: c, solution: mid, nu, a0, probes, norm_at_zero, norm_at_upper });
        }
        if g > 0.0 {
            lo = mid;
            g_lo = g;
            if last_side == 1 {
                g_hi *= 0.5;
            }
            last_side = 1;
        } else {
            hi = mid;
            g_hi = g;
            if last_side == -1 {
                g_lo *= 0.5;
            }
            last_side = -1;
        }
    }
    // Bracket collapsed without meeting the norm tolerance: return the closer end.
    let best = if (lo.window_norm(a0) - nu).abs() < (hi.window_norm(a0) - nu).abs() { lo } else { hi };
    Ok(Normalized { c_star: best.c, solution: best, nu, a0, probes, norm_at_zero, norm_at_upper })
}

/// Parameters of the strip construction derived from the periodic data.
#[derive(Debug, Clone, PartialEq)]
pub struct StripConstants {
    pub lambda1: f64,
    pub gamma_inf: f64,
    /// `min(1, -lambda1 / (4 gamma_inf), min(p, q))`.
    pub nu0: f64,
    /// `max(8 gamma_inf max(p + q) / -lambda1, 1 + max(p/q, q/p))`.
    pub k0: f64,
    /// `2 sqrt(5 / -lambda1)`.
    pub a0_star: f64,
    pub epsilon: f64,
    pub c_bar: f64,
    /// Minimizer of the dispersion curve and the matching eigenvector minimum.
    pub lambda0: f64,
    pub phi0_min: f64,
    pub max_pq: f64,
}

impl StripConstants {
    /// `max(-(1/lambda0) ln(nu min(Phi0) / (4 K max(p, q))), 1)`.
    pub fn a_bar(&self, k: f64, nu: f64) -> f64 {
        (-(nu * self.phi0_min / (4.0 * k * self.max_pq)).ln() / self.lambda0).max(1.0)
    }
}

/// Defaults `K = 1.1 K0`, `a0 = 1.05 a0*`, `nu = nu0 / 2`, `a = a0 + a_bar + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripSetup {
    pub constants: StripConstants,
    pub steady: SteadyState,
    pub k: f64,
    pub nu: f64,
    pub a0: f64,
    pub a: f64,
}

/// Steady state on the `n_x` grid: marched from a flat start, then polished by Newton.
pub fn steady_on_grid(field: &CoefficientField, grid: &PeriodicGrid) -> Result<SteadyState, StripError> {
    let c = field.bounds().steady_box();
    let init = vec![0.5 * c; grid.len()];
    let marched = match steady_time_march(field, grid, &init, &init, &MarchOptions::default())? {
        MarchOutcome::Converged(s) => s,
        MarchOutcome::CollapsedToZero { t } => return Err(SteadyError::CollapsedToZero { t }.into()),
    };
    Ok(steady_newton(field, grid, &marched.p, &marched.q, &NewtonOptions::default()).unwrap_or(marched))
}

pub fn strip_constants(
    field: &CoefficientField,
    steady: &SteadyState,
    grid: &PeriodicGrid,
    epsilon: f64,
    eig: &EigenOptions,
    dispersion: &DispersionOptions,
) -> Result<StripConstants, StripError> {
    let lambda1 = periodic_principal_eig(field, grid, 0.0, 0.0, eig)?.lambda;
    if lambda1 >= 0.0 {
        return Err(SpectralError::NotPropagating { lambda1 }.into());
    }
    let gamma_inf = field.bounds().gamma_inf;
    let min_pq = steady.min_p().min(steady.min_q());
    let max_pq = steady.p.iter().chain(&steady.q).copied().fold(0.0, f64::max);
    let nu0 = 1f64.min(-lambda1 / (4.0 * gamma_inf)).min(min_pq);
    let k0 = (8.0 * gamma_inf * steady.max_sum() / -lambda1).max(1.0 + steady.max_ratio());
    let curve = dispersion_curve(field, grid, epsilon, dispersion)?;
    let phi0 = periodic_principal_eig(field, grid, curve.lambda_star, epsilon, eig)?;
    Ok(StripConstants {
        lambda1,
        gamma_inf,
        nu0,
        k0,
        a0_star: crate::spectral::a0_star(lambda1),
        epsilon,
        c_bar: curve.c_bar,
        lambda0: curve.lambda_star,
        phi0_min: phi0.min_component(),
        max_pq,
    })
}

/// Computes the steady state on an `n_x` grid and the default strip parameters.
pub fn default_setup(
    field: &CoefficientField,
    n_x: usize,
    epsilon: f64,
    eig: &EigenOptions,
    dispersion: &DispersionOptions,
) -> Result<StripSetup, StripError> {
    let grid = PeriodicGrid::new(n_x, field.period()).map_err(SpectralError::from)?;
    let steady = steady_on_grid(field, &grid)?;
    let constants = strip_constants(field, &steady, &grid, epsilon, eig, dispersion)?;
    let k = 1.1 * constants.k0;
    let nu = 0.5 * constants.nu0;
    let a0 = 1.05 * constants.a0_star;
    let a = a0 + constants.a_bar(k, nu) + 1.0;
    Ok(StripSetup { constants, steady, k, nu, a0, a })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous_problem(a: f64, k: f64) -> StripProblem {
        let f = CoefficientField::constant(1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let grid = StripGrid::new(a, 32, 1.0).unwrap();
        let steady = steady_on_grid(&f, &grid.x_grid()).unwrap();
        StripProblem::new(&f, grid, &steady, 0.5, k).unwrap()
    }

    #[test]
    fn grid_rounding() {
        let g = StripGrid::new(2.0, 32, 1.0).unwrap();
        assert_eq!(g.n_s(), 129);
        assert_eq!(g.s(0), -2.0);
        assert!((g.s(128) - 2.0).abs() < 1e-12);
        assert!(matches!(StripGrid::new(0.2, 32, 1.0), Err(StripError::GridTooSmall { .. })));
    }

    #[test]
    fn annihilates_constants() {
        let g = StripGrid::new(1.0, 32, 1.0).unwrap();
        let w = vec![1.0; g.n_s() * g.n_x()];
        for r in apply_leps(&g, 0.7, 1.3, &w).unwrap() {
            assert!(r.abs() < 1e-9);
        }
    }

    #[test]
    fn peclet_limit_enforced() {
        let g = StripGrid::new(1.0, 32, 1.0).unwrap();
        assert!(matches!(assemble_leps(&g, 0.1, 10.0), Err(StripError::StencilNotMonotone { .. })));
        assert!(assemble_leps(&g, 0.1, 6.0).is_ok());
    }

    #[test]
    fn off_diagonals_nonpositive() {
        let g = StripGrid::new(1.0, 32, 1.0).unwrap();
        let m = assemble_leps(&g, 0.5, 2.0).unwrap();
        for i in 0..m.len() {
            let mut off = 0.0;
            for j in i.saturating_sub(m.bandwidth())..(i + m.bandwidth() + 1).min(m.len()) {
                if j != i {
                    assert!(m.get(i, j) <= 0.0);
                    off += m.get(i, j).abs();
                }
            }
            assert!(m.get(i, i) >= off - 1e-9);
        }
    }

    #[test]
    fn boundary_rows_and_bounds() {
        let prob = homogeneous_problem(3.0, 8.8);
        let sol = solve_cooperative(&prob, 1.0, None, &IterationOptions::default()).unwrap();
        let n_x = prob.grid.n_x();
        let last = (prob.grid.n_s() - 1) * n_x;
        for j in 0..n_x {
            assert_eq!(sol.u[j], prob.k * prob.p[j]);
            assert_eq!(sol.u[last + j], 0.0);
        }
        let cert = sol.certificate;
        assert!(cert.iterates_nonincreasing && cert.s_monotone && cert.within_bounds, "{cert:?}");
    }
}
