//! Principal eigenpairs of the linearized cooperative operator and the
//! front-speed dispersion relation built on them.
//!
//! The drifted periodic operator is
//! `K_l = -d_xx + 2 l d_x - (1 + eps) l^2 - A(x)`, discretized by central
//! differences. For `l = 0` it is the stationary operator whose principal
//! eigenvalue decides persistence.

use thiserror::Error;

use crate::fields::{sample_matrix_a, CoefficientField};
use crate::grid::{GridError, IntervalGrid, PeriodicGrid};
use crate::linalg::{sup_norm, Block2, BlockTridiag, BlockTridiagLu, LinalgError, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("inverse power iteration did not converge in {iterations} iterations (bound gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("eigenvector lost positivity at node {index} (value {value:e})")]
    PositivityLoss { index: usize, value: f64 },
    #[error("grid step {h} too coarse for drift; need h <= {max_h}")]
    StepTooCoarse { h: f64, max_h: f64 },
    #[error("principal eigenvalue {lambda1} is nonnegative: no propagation")]
    NotPropagating { lambda1: f64 },
    #[error("dispersion minimum at range boundary lambda = {lambda}; widen the lambda range")]
    BracketFailure { lambda: f64 },
    #[error("Rayleigh quadrature changed by {change:e} under refinement")]
    QuadratureUnderResolved { change: f64 },
    #[error("c_bar not monotone in eps: c({eps_prev}) = {c_prev} > c({eps}) = {c}")]
    NotMonotone { eps_prev: f64, c_prev: f64, eps: f64, c: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
    DriftedPeriodic,
}

impl BoundaryKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BoundaryKind::Periodic => "periodic",
            BoundaryKind::Dirichlet => "dirichlet",
            BoundaryKind::DriftedPeriodic => "drifted-periodic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Stop when the Collatz-Wielandt bracket is narrower than `tol * max(1, |lambda|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500 }
    }
}

/// Principal eigenvalue with its positive eigenvector, sup-normalized.
///
/// For Dirichlet problems `x`, `phi` and `psi` hold interior nodes only; the
/// boundary values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub x: Vec<f64>,
    pub bc: BoundaryKind,
    /// Sup-norm of `K Phi - lambda Phi`.
    pub residual: f64,
    /// Lower and upper Collatz-Wielandt bounds at exit.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

impl EigenPair {
    /// `sup max(phi/psi, psi/phi)`; the constant `C^b` of the lower-envelope argument.
    pub fn ratio_bound(&self) -> f64 {
        self.phi
            .iter()
            .zip(&self.psi)
            .map(|(&p, &q)| (p / q).max(q / p))
            .fold(1.0, f64::max)
    }

    pub fn min_component(&self) -> f64 {
        self.phi.iter().chain(&self.psi).copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Assembles `K_drift` on a periodic grid.
pub fn assemble_periodic(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    drift: f64,
    epsilon: f64,
) -> Result<BlockTridiag, SpectralError> {
    if !(epsilon >= 0.0) || !drift.is_finite() {
        return Err(SpectralError::BadParameter(format!("drift {drift}, epsilon {epsilon}")));
    }
    let h = grid.spacing();
    let max_h = 1.0 / (drift.abs() + 1.0);
    if h > max_h {
        return Err(SpectralError::StepTooCoarse { h, max_h });
    }
    let a = sample_matrix_a(field, grid);
    let h2 = h * h;
    let lower = Block2::scalar(-1.0 / h2 - drift / h);
    let upper = Block2::scalar(-1.0 / h2 + drift / h);
    let centre = 2.0 / h2 - (1.0 + epsilon) * drift * drift;
    let n = grid.len();
    Ok(BlockTridiag {
        lower: vec![lower; n],
        diag: a.iter().map(|m| Block2::scalar(centre).sub(&Block2(*m))).collect(),
        upper: vec![upper; n],
        cyclic: true,
    })
}

/// Assembles `-d_xx - A(x)` on the interior nodes of `grid` with zero boundary values.
pub fn assemble_dirichlet(field: &CoefficientField, grid: &IntervalGrid) -> BlockTridiag {
    let h = grid.spacing();
    let h2 = h * h;
    let s = field.sample_at(&grid.interior_nodes());
    let n = grid.n_interior();
    let off = Block2::scalar(-1.0 / h2);
    BlockTridiag {
        lower: vec![off; n],
        diag: (0..n)
            .map(|j| {
                let c = 2.0 / h2;
                Block2::new(c - s.r_u[j] + s.mu[j], -s.mu[j], -s.mu[j], c - s.r_v[j] + s.mu[j])
            })
            .collect(),
        upper: vec![off; n],
        cyclic: false,
    }
}

struct RawEigen {
    lambda: f64,
    vector: Vec<Vec2>,
    residual: f64,
    bracket: (f64, f64),
    iterations: usize,
}

/// Principal (smallest real) eigenvalue of a Z-matrix with irreducible
/// off-diagonal pattern, by shifted inverse power iteration.
///
/// The shift starts one unit below the Gershgorin bound, where `K - sigma` is a
/// nonsingular M-matrix with positive inverse. Each step yields
/// Collatz-Wielandt bounds `sigma + min x/y <= lambda <= sigma + max x/y`
/// for `y = (K - sigma)^-1 x`; the shift then moves up to just below the
/// current lower bound, which keeps the M-matrix property.
fn principal_eig(op: &BlockTridiag, opts: &EigenOptions) -> Result<RawEigen, SpectralError> {
    let n = op.len();
    let mut sigma = op.gershgorin_lower() - 1.0;
    let mut x = vec![[1.0, 1.0]; n];
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut restarts = 0;
    for it in 1..=opts.max_iter {
        let lu = BlockTridiagLu::factor(&op.shifted(sigma))?;
        let mut y = x.clone();
        lu.solve(&mut y);
        let mut ratio = (f64::INFINITY, f64::NEG_INFINITY);
        let mut positive = true;
        for (xj, yj) in x.iter().zip(&y) {
            for c in 0..2 {
                if !(yj[c] > 0.0) || !yj[c].is_finite() {
                    positive = false;
                    break;
                }
                let r = xj[c] / yj[c];
                ratio = (ratio.0.min(r), ratio.1.max(r));
            }
        }
        if !positive {
            // Only reachable through roundoff when the shift crept up to the
            // eigenvalue: back off and restart from the flat vector.
            restarts += 1;
            if restarts > 10 {
                return Err(SpectralError::NoConvergence { iterations: it, gap: hi - lo });
            }
            sigma -= (hi - lo).max(1e-6 * (1.0 + sigma.abs())) * 10f64.powi(restarts);
            x = vec![[1.0, 1.0]; n];
            continue;
        }
        lo = lo.max(sigma + ratio.0);
        hi = hi.min(sigma + ratio.1);
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v[0]).max(v[1]));
        x = y.into_iter().map(|v| [v[0] / scale, v[1] / scale]).collect();
        let gap = hi - lo;
        let mid = 0.5 * (lo + hi);
        if it >= 2 && gap <= opts.tol * mid.abs().max(1.0) {
            let kx = op.apply(&x);
            let residual = kx
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (k, v)| m.max((k[0] - mid * v[0]).abs()).max((k[1] - mid * v[1]).abs()));
            return Ok(RawEigen { lambda: mid, vector: x, residual, bracket: (lo, hi), iterations: it });
        }
        let delta = gap.max(1e-7 * (1.0 + lo.abs()));
        sigma = sigma.max(lo - delta);
    }
    Err(SpectralError::NoConvergence { iterations: opts.max_iter, gap: hi - lo })
}

fn into_pair(raw: RawEigen, x: Vec<f64>, bc: BoundaryKind) -> Result<EigenPair, SpectralError> {
    let phi: Vec<f64> = raw.vector.iter().map(|v| v[0]).collect();
    let psi: Vec<f64> = raw.vector.iter().map(|v| v[1]).collect();
    for (index, &value) in phi.iter().chain(&psi).enumerate() {
        if !(value > 0.0) {
            return Err(SpectralError::PositivityLoss { index: index % phi.len(), value });
        }
    }
    Ok(EigenPair {
        lambda: raw.lambda,
        phi,
        psi,
        x,
        bc,
        residual: raw.residual,
        bracket: raw.bracket,
        iterations: raw.iterations,
    })
}

/// Principal eigenpair of `K_drift` on one period. With `drift = 0` and
/// `epsilon = 0` this is `lambda_1`.
pub fn periodic_principal_eig(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    drift: f64,
    epsilon: f64,
    opts: &EigenOptions,
) -> Result<EigenPair, SpectralError> {
    let op = assemble_periodic(field, grid, drift, epsilon)?;
    let raw = principal_eig(&op, opts)?;
    let bc = if drift == 0.0 { BoundaryKind::Periodic } else { BoundaryKind::DriftedPeriodic };
    into_pair(raw, grid.nodes(), bc)
}

/// Principal eigenpair of `-d_xx - A` on `grid` with zero Dirichlet data.
pub fn dirichlet_principal_eig(
    field: &CoefficientField,
    grid: &IntervalGrid,
    opts: &EigenOptions,
) -> Result<EigenPair, SpectralError> {
    let op = assemble_dirichlet(field, grid);
    let raw = principal_eig(&op, opts)?;
    into_pair(raw, grid.interior_nodes(), BoundaryKind::Dirichlet)
}

/// `(-R, R)` discretized with the periodic spacing `L / n_cells`.
pub fn dirichlet_grid(field: &CoefficientField, half_width: f64, n_cells: usize) -> Result<IntervalGrid, GridError> {
    IntervalGrid::symmetric(half_width, field.period() / n_cells as f64)
}

/// One row of a Dirichlet convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub r: f64,
    pub lambda1_r: f64,
    pub gap: f64,
    pub gap_times_r: f64,
}

/// `lambda_1^R` on `(-R, R)` for each radius, compared against the periodic `lambda1`.
pub fn dirichlet_convergence(
    field: &CoefficientField,
    n_cells: usize,
    lambda1: f64,
    radii: &[f64],
    opts: &EigenOptions,
) -> Result<Vec<ConvergenceRow>, SpectralError> {
    radii
        .iter()
        .map(|&r| {
            let grid = dirichlet_grid(field, r, n_cells)?;
            let eig = dirichlet_principal_eig(field, &grid, opts)?;
            let gap = eig.lambda - lambda1;
            Ok(ConvergenceRow { r, lambda1_r: eig.lambda, gap, gap_times_r: gap * r })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionOptions {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub n_samples: usize,
    pub eig: EigenOptions,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        Self { lambda_lo: 0.02, lambda_hi: 10.0, n_samples: 48, eig: EigenOptions::default() }
    }
}

/// Sampled `c(l) = -k_eps(l) / l` and its minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionCurve {
    pub epsilon: f64,
    pub lambda1: f64,
    pub lambdas: Vec<f64>,
    pub k_values: Vec<f64>,
    pub c_values: Vec<f64>,
    /// Refined minimizer.
    pub lambda_star: f64,
    pub k_star: f64,
    pub c_bar: f64,
}

impl DispersionCurve {
    /// `k_eps(l*) + l* c_bar`, zero up to roundoff by construction.
    pub fn consistency(&self) -> f64 {
        self.k_star + self.lambda_star * self.c_bar
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Dispersion relation of the regularized drifted operator and its minimum `c_bar^eps`.
pub fn dispersion_curve(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    epsilon: f64,
    opts: &DispersionOptions,
) -> Result<DispersionCurve, SpectralError> {
    if !(opts.lambda_lo > 0.0 && opts.lambda_lo < opts.lambda_hi) || opts.n_samples < 3 {
        return Err(SpectralError::BadParameter(format!(
            "lambda range [{}, {}] with {} samples",
            opts.lambda_lo, opts.lambda_hi, opts.n_samples
        )));
    }
    let lambda1 = periodic_principal_eig(field, grid, 0.0, 0.0, &opts.eig)?.lambda;
    if lambda1 >= 0.0 {
        return Err(SpectralError::NotPropagating { lambda1 });
    }
    let speed = |l: f64| -> Result<(f64, f64), SpectralError> {
        let k = periodic_principal_eig(field, grid, l, epsilon, &opts.eig)?.lambda;
        Ok((k, -k / l))
    };
    let mut n = opts.n_samples;
    let mut rescanned = false;
    loop {
        let lambdas = log_space(opts.lambda_lo, opts.lambda_hi, n);
        let mut k_values = Vec::with_capacity(n);
        let mut c_values = Vec::with_capacity(n);
        for &l in &lambdas {
            let (k, c) = speed(l)?;
            k_values.push(k);
            c_values.push(c);
        }
        let imin = (0..n).fold(0, |b, i| if c_values[i] < c_values[b] { i } else { b });
        if imin == 0 || imin == n - 1 {
            return Err(SpectralError::BracketFailure { lambda: lambdas[imin] });
        }
        let (lambda_star, k_star, c_bar) = golden_min(&speed, lambdas[imin - 1], lambdas[imin + 1])?;
        let (lambda_star, k_star, c_bar) = if c_values[imin] < c_bar {
            (lambdas[imin], k_values[imin], c_values[imin])
        } else {
            (lambda_star, k_star, c_bar)
        };
        let discrete = c_values[imin];
        if (discrete - c_bar).abs() > 0.01 * discrete.abs() && !rescanned {
            rescanned = true;
            n *= 4;
            continue;
        }
        return Ok(DispersionCurve { epsilon, lambda1, lambdas, k_values, c_values, lambda_star, k_star, c_bar });
    }
}

type SpeedFn<'a> = dyn Fn(f64) -> Result<(f64, f64), SpectralError> + 'a;

/// Golden-section search for the minimum of `c` on `[a, b]`; returns `(l, k, c)`.
fn golden_min(speed: &SpeedFn<'_>, mut a: f64, mut b: f64) -> Result<(f64, f64, f64), SpectralError> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = speed(x1)?;
    let mut f2 = speed(x2)?;
    while b - a > 1e-8 * (1.0 + 0.5 * (a + b)) {
        if f1.1 < f2.1 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = speed(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = speed(x2)?;
        }
    }
    Ok(if f1.1 < f2.1 { (x1, f1.0, f1.1) } else { (x2, f2.0, f2.1) })
}

/// `c_bar^eps` for each `eps`, checked to be nondecreasing within
/// `1e-8 (1 + |c_bar|)`.
pub fn monotonicity_check_eps(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    eps_list: &[f64],
    opts: &DispersionOptions,
) -> Result<Vec<(f64, f64)>, SpectralError> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let c = dispersion_curve(field, grid, eps, opts)?.c_bar;
        if let Some(&(eps_prev, c_prev)) = out.last() {
            if eps < eps_prev {
                return Err(SpectralError::BadParameter("eps list must be ascending".into()));
            }
            if c < c_prev - 1e-8 * (1.0 + c_prev.abs()) {
                return Err(SpectralError::NotMonotone { eps_prev, c_prev, eps, c });
            }
        }
        out.push((eps, c));
    }
    Ok(out)
}

/// Half-width `a0* = 2 sqrt(5 / -lambda1)` at which the strip bound reaches `3 lambda1 / 4`
/// for `eps = 0`.
pub fn a0_star(lambda1: f64) -> f64 {
    2.0 * (5.0 / -lambda1).sqrt()
}

/// Analytic upper bound `lambda1 + 5 (1 + eps) / (2 a0^2)`.
pub fn strip_bound_value(lambda1: f64, a0: f64, epsilon: f64) -> f64 {
    lambda1 + 5.0 * (1.0 + epsilon) / (2.0 * a0 * a0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighBound {
    pub a0: f64,
    pub epsilon: f64,
    pub lambda1: f64,
    pub bound_value: f64,
    pub quadrature_value: f64,
}

impl RayleighBound {
    pub fn holds(&self, margin: f64) -> bool {
        self.quadrature_value <= self.bound_value + margin
    }
}

/// Rayleigh quotient on `(-a0, a0) x [0, L)` of `w(s, x) = eta(s) Phi(x)` with
/// `eta(s) = a0^2 - s^2` for the strip operator
/// `-(d_x + d_s)^2 - eps d_ss - A(x)`, by tensor trapezoid quadrature.
///
/// `eig` must be the periodic principal eigenpair on `grid`. The x factor uses
/// forward differences, so its part of the quotient is the discrete
/// `lambda_1` exactly; `n_s` intervals are used in s and the value is compared
/// against `2 n_s`.
pub fn strip_rayleigh_bound(
    field: &CoefficientField,
    grid: &PeriodicGrid,
    eig: &EigenPair,
    a0: f64,
    epsilon: f64,
    n_s: usize,
) -> Result<RayleighBound, SpectralError> {
    if !(a0 > 0.0) || !(epsilon >= 0.0) || n_s < 2 || eig.len() != grid.len() {
        return Err(SpectralError::BadParameter(format!("a0 {a0}, epsilon {epsilon}, n_s {n_s}")));
    }
    let h = grid.spacing();
    let n = grid.len();
    let a = sample_matrix_a(field, grid);
    let (phi, psi) = (&eig.phi, &eig.psi);
    let (mut grad, mut mass, mut pot, mut cross) = (0.0, 0.0, 0.0, 0.0);
    for j in 0..n {
        let k = grid.next(j);
        let (dp, dq) = ((phi[k] - phi[j]) / h, (psi[k] - psi[j]) / h);
        grad += dp * dp + dq * dq;
        mass += phi[j] * phi[j] + psi[j] * psi[j];
        let m = &a[j];
        pot += phi[j] * (m[0][0] * phi[j] + m[0][1] * psi[j]) + psi[j] * (m[1][0] * phi[j] + m[1][1] * psi[j]);
        cross += phi[j] * dp + psi[j] * dq;
    }
    let quotient = |n_s: usize| {
        let hs = 2.0 * a0 / n_s as f64;
        let (mut e0, mut e1, mut ec) = (0.0, 0.0, 0.0);
        for i in 0..=n_s {
            let s = -a0 + i as f64 * hs;
            let w = if i == 0 || i == n_s { 0.5 } else { 1.0 };
            let eta = a0 * a0 - s * s;
            let deta = -2.0 * s;
            e0 += w * eta * eta;
            e1 += w * deta * deta;
            ec += w * eta * deta;
        }
        let num = e0 * (grad - pot) + 2.0 * ec * cross + (1.0 + epsilon) * e1 * mass;
        num / (e0 * mass)
    };
    let coarse = quotient(n_s);
    let fine = quotient(2 * n_s);
    let change = (fine - coarse).abs();
    if change > 1e-6 {
        return Err(SpectralError::QuadratureUnderResolved { change });
    }
    Ok(RayleighBound {
        a0,
        epsilon,
        lambda1: eig.lambda,
        bound_value: strip_bound_value(eig.lambda, a0, epsilon),
        quadrature_value: fine,
    })
}

/// Sup-norm of a vector pair.
pub fn pair_sup(phi: &[f64], psi: &[f64]) -> f64 {
    sup_norm(phi).max(sup_norm(psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::TrigPoly;

    fn constant(r_u: f64, r_v: f64, mu: f64) -> CoefficientField {
        CoefficientField::constant(r_u, r_v, 1.0, mu, 1.0).unwrap()
    }

    fn sinusoidal() -> CoefficientField {
        CoefficientField::new(
            1.0,
            TrigPoly::with_cosine(0.5, 1.0, 1),
            TrigPoly::with_cosine(0.5, 1.0, 1),
            TrigPoly::constant(1.0),
            TrigPoly::constant(1.0),
            TrigPoly::constant(0.2),
            256,
        )
        .unwrap()
    }

    #[test]
    fn constant_closed_forms() {
        let grid = PeriodicGrid::new(64, 1.0).unwrap();
        let opts = EigenOptions::default();
        let e = periodic_principal_eig(&constant(1.0, 1.0, 0.1), &grid, 0.0, 0.0, &opts).unwrap();
        assert!((e.lambda + 1.0).abs() < 1e-10, "{}", e.lambda);
        assert!((pair_sup(&e.phi, &e.psi) - 1.0).abs() < 1e-12);
        let e = periodic_principal_eig(&constant(1.0, 0.0, 0.5), &grid, 0.0, 0.0, &opts).unwrap();
        assert!((e.lambda + 0.5f64.sqrt()).abs() < 1e-10, "{}", e.lambda);
    }

    #[test]
    fn drift_on_constants() {
        let grid = PeriodicGrid::new(64, 1.0).unwrap();
        let e = periodic_principal_eig(&constant(1.0, 1.0, 0.1), &grid, 0.8, 0.3, &EigenOptions::default()).unwrap();
        assert!((e.lambda - (-1.3 * 0.64 - 1.0)).abs() < 1e-10);
        assert_eq!(e.bc, BoundaryKind::DriftedPeriodic);
    }

    #[test]
    fn dirichlet_constant_closed_form() {
        let f = constant(1.0, 1.0, 0.1);
        let grid = dirichlet_grid(&f, 10.0, 64).unwrap();
        let e = dirichlet_principal_eig(&f, &grid, &EigenOptions::default()).unwrap();
        let h = grid.spacing();
        let discrete = 4.0 / (h * h) * (std::f64::consts::PI * h / 40.0).sin().powi(2) - 1.0;
        assert!((e.lambda - discrete).abs() < 1e-9);
        let exact = std::f64::consts::PI.powi(2) / 400.0 - 1.0;
        assert!((e.lambda - exact).abs() < 1e-6, "{} vs {exact}", e.lambda);
        assert!((e.ratio_bound() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shift_invariance() {
        let grid = PeriodicGrid::new(128, 1.0).unwrap();
        let f = sinusoidal();
        let opts = EigenOptions::default();
        let l0 = periodic_principal_eig(&f, &grid, 0.0, 0.0, &opts).unwrap().lambda;
        let l1 = periodic_principal_eig(&f.shifted(0.37), &grid, 0.0, 0.0, &opts).unwrap().lambda;
        assert!((l1 - (l0 - 0.37)).abs() < 1e-9);
    }

    #[test]
    fn rayleigh_quotient_matches_eigenvalue() {
        let grid = PeriodicGrid::new(128, 1.0).unwrap();
        let f = sinusoidal();
        let e = periodic_principal_eig(&f, &grid, 0.0, 0.0, &EigenOptions::default()).unwrap();
        let op = assemble_periodic(&f, &grid, 0.0, 0.0).unwrap();
        let x: Vec<Vec2> = e.phi.iter().zip(&e.psi).map(|(&p, &q)| [p, q]).collect();
        let kx = op.apply(&x);
        let num: f64 = kx.iter().zip(&x).map(|(k, v)| k[0] * v[0] + k[1] * v[1]).sum();
        let den: f64 = x.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum();
        assert!((num / den - e.lambda).abs() < 1e-10);
    }

    #[test]
    fn coarse_grid_rejected_for_large_drift() {
        let grid = PeriodicGrid::new(8, 1.0).unwrap();
        let r = periodic_principal_eig(&constant(1.0, 1.0, 0.1), &grid, 20.0, 0.0, &EigenOptions::default());
        assert!(matches!(r, Err(SpectralError::StepTooCoarse { .. })));
    }

    #[test]
    fn kpp_speed_homogeneous() {
        let grid = PeriodicGrid::new(32, 1.0).unwrap();
        let f = constant(1.0, 1.0, 0.1);
        let d = dispersion_curve(&f, &grid, 0.0, &DispersionOptions::default()).unwrap();
        assert!((d.c_bar - 2.0).abs() < 1e-9, "{}", d.c_bar);
        assert!((d.lambda_star - 1.0).abs() < 1e-3);
        assert!(d.consistency().abs() < 1e-12);
        let d = dispersion_curve(&f, &grid, 0.21, &DispersionOptions::default()).unwrap();
        assert!((d.c_bar - 2.2).abs() < 1e-9);
    }

    #[test]
    fn not_propagating() {
        let grid = PeriodicGrid::new(32, 1.0).unwrap();
        let r = dispersion_curve(&constant(-0.5, -0.5, 0.1), &grid, 0.0, &DispersionOptions::default());
        assert!(matches!(r, Err(SpectralError::NotPropagating { .. })));
    }

    #[test]
    fn narrow_range_fails_to_bracket() {
        let grid = PeriodicGrid::new(32, 1.0).unwrap();
        let opts = DispersionOptions { lambda_lo: 2.0, lambda_hi: 5.0, ..Default::default() };
        let r = dispersion_curve(&constant(1.0, 1.0, 0.1), &grid, 0.0, &opts);
        assert!(matches!(r, Err(SpectralError::BracketFailure { .. })));
    }

    #[test]
    fn eps_monotonicity_constant() {
        let grid = PeriodicGrid::new(32, 1.0).unwrap();
        let v = monotonicity_check_eps(&constant(1.0, 1.0, 0.1), &grid, &[0.0, 0.1, 0.2], &DispersionOptions::default())
            .unwrap();
        for (eps, c) in v {
            assert!((c - 2.0 * (1.0 + eps).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn strip_bound_values() {
        let a0 = 2.0 * 5f64.sqrt();
        assert!((a0_star(-1.0) - a0).abs() < 1e-15);
        assert!((strip_bound_value(-1.0, a0, 0.0) + 0.875).abs() < 1e-14);
        assert!((strip_bound_value(-1.0, a0, 1.0) + 0.75).abs() < 1e-14);
    }

    #[test]
    fn rayleigh_quadrature_constant() {
        let grid = PeriodicGrid::new(64, 1.0).unwrap();
        let f = constant(1.0, 1.0, 0.1);
        let e = periodic_principal_eig(&f, &grid, 0.0, 0.0, &EigenOptions::default()).unwrap();
        let a0 = a0_star(e.lambda);
        let r = strip_rayleigh_bound(&f, &grid, &e, a0, 0.0, 4000).unwrap();
        assert!((r.quadrature_value - r.bound_value).abs() < 1e-6);
        assert!(r.holds(1e-6));
    }
}
