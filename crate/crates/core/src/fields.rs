//! Periodic coefficient fields and the grids they are sampled on.
//!
//! Every coefficient is a trigonometric polynomial
//! `f(x) = mean + sum_k a_k cos(2 pi n_k x / L + phase_k)`, which keeps the
//! coefficients smooth and makes exact outer bounds available.

use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::PeriodicGrid;

/// Oversampling factor used when tightening the coefficient bounds.
pub const BOUND_OVERSAMPLING: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("{name} is not strictly positive: minimum sampled value {min}")]
    PositivityViolation { name: &'static str, min: f64 },
    #[error("{name} has a non-finite mean or harmonic")]
    NonFinite { name: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    /// Integer number of oscillations per period.
    pub wavenumber: u32,
    pub phase: f64,
}

/// A real trigonometric polynomial with period `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    pub mean: f64,
    pub harmonics: Vec<Harmonic>,
}

impl TrigPoly {
    pub fn constant(mean: f64) -> Self {
        Self { mean, harmonics: Vec::new() }
    }

    pub fn with_cosine(mean: f64, amplitude: f64, wavenumber: u32) -> Self {
        Self {
            mean,
            harmonics: vec![Harmonic { amplitude, wavenumber, phase: 0.0 }],
        }
    }

    pub fn eval(&self, x: f64, period: f64) -> f64 {
        let theta = 2.0 * PI * x / period;
        self.harmonics.iter().fold(self.mean, |acc, h| {
            acc + h.amplitude * (h.wavenumber as f64 * theta + h.phase).cos()
        })
    }

    /// `(mean - sum |a_k|, mean + sum |a_k|)`.
    pub fn analytic_range(&self) -> (f64, f64) {
        let spread: f64 = self.harmonics.iter().map(|h| h.amplitude.abs()).sum();
        (self.mean - spread, self.mean + spread)
    }

    pub fn is_constant(&self) -> bool {
        self.harmonics.iter().all(|h| h.amplitude == 0.0)
    }

    fn is_finite(&self) -> bool {
        self.mean.is_finite()
            && self
                .harmonics
                .iter()
                .all(|h| h.amplitude.is_finite() && h.phase.is_finite())
    }

    fn sampled_range(&self, period: f64, n: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..n {
            let v = self.eval(j as f64 * period / n as f64, period);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Lower and upper bounds of the coefficients, shared by both strains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub r0: f64,
    pub r_inf: f64,
    pub gamma0: f64,
    pub gamma_inf: f64,
    pub mu0: f64,
    pub mu_inf: f64,
}

impl Bounds {
    /// Upper bound on nonnegative periodic steady states, `max(r_inf, mu_inf) / gamma0`.
    pub fn steady_box(&self) -> f64 {
        (self.r_inf / self.gamma0).max(self.mu_inf / self.gamma0)
    }
}

/// Coefficient samples on a grid.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    pub r_u: Vec<f64>,
    pub r_v: Vec<f64>,
    pub gamma_u: Vec<f64>,
    pub gamma_v: Vec<f64>,
    pub mu: Vec<f64>,
}

impl FieldSamples {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Reaction and mutation terms at node `j`:
    /// `(p (r_u - gamma_u (p + q)) + mu (q - p), q (r_v - gamma_v (p + q)) + mu (p - q))`.
    #[inline]
    pub fn reaction(&self, j: usize, p: f64, q: f64) -> [f64; 2] {
        let s = p + q;
        let m = self.mu[j] * (q - p);
        [p * (self.r_u[j] - self.gamma_u[j] * s) + m, q * (self.r_v[j] - self.gamma_v[j] * s) - m]
    }
}

/// The L-periodic environment: growth rates, competition, mutation.
///
/// Immutable once built; bounds are computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    period: f64,
    pub r_u: TrigPoly,
    pub r_v: TrigPoly,
    pub gamma_u: TrigPoly,
    pub gamma_v: TrigPoly,
    pub mu: TrigPoly,
    bounds: Bounds,
    analytic_bounds: Bounds,
}

impl CoefficientField {
    /// Validates the coefficients and computes their bounds by sampling
    /// `BOUND_OVERSAMPLING * n_cells` points per period.
    pub fn new(
        period: f64,
        r_u: TrigPoly,
        r_v: TrigPoly,
        gamma_u: TrigPoly,
        gamma_v: TrigPoly,
        mu: TrigPoly,
        n_cells: usize,
    ) -> Result<Self, FieldError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(FieldError::BadPeriod(period));
        }
        for (name, c) in [
            ("r_u", &r_u),
            ("r_v", &r_v),
            ("gamma_u", &gamma_u),
            ("gamma_v", &gamma_v),
            ("mu", &mu),
        ] {
            if !c.is_finite() {
                return Err(FieldError::NonFinite { name });
            }
        }
        let n = BOUND_OVERSAMPLING * n_cells.max(1);
        let sampled = |c: &TrigPoly| c.sampled_range(period, n);
        let (gu, gv, m) = (sampled(&gamma_u), sampled(&gamma_v), sampled(&mu));
        for (name, (lo, _)) in [("gamma_u", gu), ("gamma_v", gv), ("mu", m)] {
            if lo <= 0.0 {
                return Err(FieldError::PositivityViolation { name, min: lo });
            }
        }
        let (ru, rv) = (sampled(&r_u), sampled(&r_v));
        let bounds = Bounds {
            r0: ru.0.min(rv.0),
            r_inf: ru.1.max(rv.1),
            gamma0: gu.0.min(gv.0),
            gamma_inf: gu.1.max(gv.1),
            mu0: m.0,
            mu_inf: m.1,
        };
        let a = |c: &TrigPoly| c.analytic_range();
        let (ru, rv, gu, gv, m) = (a(&r_u), a(&r_v), a(&gamma_u), a(&gamma_v), a(&mu));
        let analytic_bounds = Bounds {
            r0: ru.0.min(rv.0),
            r_inf: ru.1.max(rv.1),
            gamma0: gu.0.min(gv.0),
            gamma_inf: gu.1.max(gv.1),
            mu0: m.0,
            mu_inf: m.1,
        };
        Ok(Self { period, r_u, r_v, gamma_u, gamma_v, mu, bounds, analytic_bounds })
    }

    /// Constant coefficients with equal competition for both strains.
    pub fn constant(r_u: f64, r_v: f64, gamma: f64, mu: f64, period: f64) -> Result<Self, FieldError> {
        Self::new(
            period,
            TrigPoly::constant(r_u),
            TrigPoly::constant(r_v),
            TrigPoly::constant(gamma),
            TrigPoly::constant(gamma),
            TrigPoly::constant(mu),
            1,
        )
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Sampled (tight) bounds.
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Certified outer bounds `mean +- sum |amplitudes|`.
    pub fn analytic_bounds(&self) -> Bounds {
        self.analytic_bounds
    }

    pub fn is_homogeneous(&self) -> bool {
        [&self.r_u, &self.r_v, &self.gamma_u, &self.gamma_v, &self.mu]
            .iter()
            .all(|c| c.is_constant())
    }

    /// Same field with `r_u + beta`, `r_v + beta`.
    pub fn shifted(&self, beta: f64) -> Self {
        let mut out = self.clone();
        out.r_u.mean += beta;
        out.r_v.mean += beta;
        for b in [&mut out.bounds, &mut out.analytic_bounds] {
            b.r0 += beta;
            b.r_inf += beta;
        }
        out
    }

    pub fn r_u_at(&self, x: f64) -> f64 {
        self.r_u.eval(x, self.period)
    }
    pub fn r_v_at(&self, x: f64) -> f64 {
        self.r_v.eval(x, self.period)
    }
    pub fn gamma_u_at(&self, x: f64) -> f64 {
        self.gamma_u.eval(x, self.period)
    }
    pub fn gamma_v_at(&self, x: f64) -> f64 {
        self.gamma_v.eval(x, self.period)
    }
    pub fn mu_at(&self, x: f64) -> f64 {
        self.mu.eval(x, self.period)
    }

    /// Samples all coefficients at arbitrary positions.
    pub fn sample_at(&self, xs: &[f64]) -> FieldSamples {
        let s = |c: &TrigPoly| xs.iter().map(|&x| c.eval(x, self.period)).collect();
        FieldSamples {
            r_u: s(&self.r_u),
            r_v: s(&self.r_v),
            gamma_u: s(&self.gamma_u),
            gamma_v: s(&self.gamma_v),
            mu: s(&self.mu),
        }
    }

    pub fn sample(&self, grid: &PeriodicGrid) -> FieldSamples {
        self.sample_at(&grid.nodes())
    }
}

/// `A(x) = [[r_u - mu, mu], [mu, r_v - mu]]` at each node of `grid`.
pub fn sample_matrix_a(field: &CoefficientField, grid: &PeriodicGrid) -> Vec<[[f64; 2]; 2]> {
    let s = field.sample(grid);
    (0..s.len())
        .map(|j| [[s.r_u[j] - s.mu[j], s.mu[j]], [s.mu[j], s.r_v[j] - s.mu[j]]])
        .collect()
}
