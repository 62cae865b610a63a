//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use pulsefront::{CoefficientField, Harmonic, TrigPoly};
use rand::Rng;

/// `-phi'' + 2 l phi' - (1 + eps) l^2 phi - A phi` on `n` periodic nodes with
/// centred differences, unknowns interleaved `(u_0, v_0, u_1, ...)`.
pub fn dense_operator(field: &CoefficientField, n: usize, drift: f64, eps: f64) -> DMatrix<f64> {
    let period = field.period();
    let h = period / n as f64;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        let x = j as f64 * h;
        let (ru, rv, mu) = (field.r_u.eval(x, period), field.r_v.eval(x, period), field.mu.eval(x, period));
        let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
        for c in 0..2 {
            let row = 2 * j + c;
            m[(row, row)] += 2.0 / (h * h) - (1.0 + eps) * drift * drift;
            m[(row, 2 * jm + c)] += -1.0 / (h * h) - drift / h;
            m[(row, 2 * jp + c)] += -1.0 / (h * h) + drift / h;
        }
        m[(2 * j, 2 * j)] -= ru - mu;
        m[(2 * j, 2 * j + 1)] -= mu;
        m[(2 * j + 1, 2 * j)] -= mu;
        m[(2 * j + 1, 2 * j + 1)] -= rv - mu;
    }
    m
}

/// Eigenvalue of smallest real part, from the full spectrum.
pub fn dense_principal(m: DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
}

pub fn dense_k(field: &CoefficientField, n: usize, drift: f64, eps: f64) -> f64 {
    dense_principal(dense_operator(field, n, drift, eps))
}

/// True when the Z-matrix `m` is a nonsingular M-matrix, i.e. Gaussian
/// elimination without pivoting meets only positive pivots.
pub fn is_m_matrix(mut m: DMatrix<f64>) -> bool {
    let n = m.nrows();
    for k in 0..n {
        let pivot = m[(k, k)];
        if !(pivot > 0.0) {
            return false;
        }
        for i in k + 1..n {
            let f = m[(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                m[(i, j)] -= f * m[(k, j)];
            }
        }
    }
    true
}

/// Sign of `k(l) + c l` with `k(l)` the principal eigenvalue of the drifted
/// operator: positive iff the shifted matrix is a nonsingular M-matrix.
pub fn dispersion_sign_positive(field: &CoefficientField, n: usize, eps: f64, c: f64, l: f64) -> bool {
    let mut m = dense_operator(field, n, l, eps);
    for i in 0..2 * n {
        m[(i, i)] += c * l;
    }
    is_m_matrix(m)
}

/// Minimal speed as the smallest `c` for which `k(l) + c l` takes a
/// nonnegative value on `l > 0`, from sign evaluations only: a coarse scan of
/// the `(c, l)` plane, then bisection in `c` over a fine `l` grid around the
/// coarse minimizer.
pub fn sign_scan_cbar(field: &CoefficientField, n: usize, eps: f64, l_hi: f64) -> f64 {
    let reaches = |c: f64, lambdas: &[f64]| lambdas.iter().position(|&l| dispersion_sign_positive(field, n, eps, c, l));
    let coarse: Vec<f64> = (1..=120).map(|i| l_hi * i as f64 / 120.0).collect();
    let (mut lo, mut hi) = (0.0, 16.0);
    assert!(reaches(lo, &coarse).is_none() && reaches(hi, &coarse).is_some());
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if reaches(mid, &coarse).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let centre = coarse[reaches(hi, &coarse).unwrap()];
    let step = l_hi / 120.0;
    let fine: Vec<f64> = (0..=400).map(|i| centre - 2.0 * step + 4.0 * step * i as f64 / 400.0).filter(|&l| l > 0.0).collect();
    let (mut lo, mut hi) = (0.95 * hi, hi + 1e-9);
    assert!(reaches(lo, &fine).is_none());
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if reaches(mid, &fine).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A positive, cooperative field with one or two random harmonics per growth rate.
pub fn random_field(rng: &mut impl Rng) -> CoefficientField {
    let period = rng.gen_range(0.5..3.0);
    let growth = |rng: &mut dyn rand::RngCore| {
        let n_h = rng.gen_range(1..=2);
        TrigPoly {
            mean: rng.gen_range(-1.0..1.0),
            harmonics: (0..n_h)
                .map(|_| Harmonic {
                    amplitude: rng.gen_range(0.0..1.0),
                    wavenumber: rng.gen_range(1..=3),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                })
                .collect(),
        }
    };
    let (ru, rv) = (growth(rng), growth(rng));
    let mu_mean = rng.gen_range(0.2..1.0);
    let mu = TrigPoly {
        mean: mu_mean,
        harmonics: vec![Harmonic { amplitude: 0.4 * mu_mean, wavenumber: 1, phase: rng.gen_range(0.0..1.0) }],
    };
    CoefficientField::new(period, ru, rv, TrigPoly::constant(1.0), TrigPoly::constant(1.0), mu, 64).unwrap()
}

/// Growth `1 + 0.5 cos` for u and `0.5 - 0.5 cos` for v on a period of 2.
pub fn opposed_field() -> CoefficientField {
    CoefficientField::new(
        2.0,
        TrigPoly::with_cosine(1.0, 0.5, 1),
        TrigPoly::with_cosine(0.5, -0.5, 1),
        TrigPoly::constant(1.0),
        TrigPoly::constant(1.0),
        TrigPoly::constant(0.2),
        64,
    )
    .unwrap()
}

/// `r_u = r_v = 0.5 + cos`, `mu = 0.2`, period 1.
pub fn cosine_field() -> CoefficientField {
    CoefficientField::new(
        1.0,
        TrigPoly::with_cosine(0.5, 1.0, 1),
        TrigPoly::with_cosine(0.5, 1.0, 1),
        TrigPoly::constant(1.0),
        TrigPoly::constant(1.0),
        TrigPoly::constant(0.2),
        64,
    )
    .unwrap()
}
