//! Small dense kernels and the banded solvers used by every discretization.
//!
//! All systems assembled in this crate are M-matrices (nonpositive
//! off-diagonals, diagonally dominant after the chosen shift), so the
//! factorizations run without pivoting.

mod banded;
mod block;
mod tridiag;

pub use banded::BandedLu;
pub use banded::BandedMatrix;
pub use block::{BlockTridiag, BlockTridiagLu};
pub use tridiag::{CyclicTridiagLu, TridiagLu};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular pivot at row {row} (|pivot| = {pivot:e})")]
    SingularPivot { row: usize, pivot: f64 },
    #[error("system too small: {0} unknowns")]
    TooSmall(usize),
}

pub type Vec2 = [f64; 2];

/// A 2x2 matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Block2(pub [[f64; 2]; 2]);

impl Block2 {
    pub const ZERO: Block2 = Block2([[0.0; 2]; 2]);

    pub fn scalar(s: f64) -> Self {
        Block2([[s, 0.0], [0.0, s]])
    }

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Block2([[a, b], [c, d]])
    }

    #[inline]
    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    #[inline]
    pub fn inverse(&self) -> Option<Block2> {
        let d = self.det();
        let scale = self.norm_inf();
        if !d.is_finite() || d.abs() <= 1e-300 || d.abs() <= f64::EPSILON * 1e-4 * scale * scale {
            return None;
        }
        let m = &self.0;
        Some(Block2([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    #[inline]
    pub fn mul(&self, o: &Block2) -> Block2 {
        let (a, b) = (&self.0, &o.0);
        Block2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    #[inline]
    pub fn apply(&self, v: Vec2) -> Vec2 {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    #[inline]
    pub fn add(&self, o: &Block2) -> Block2 {
        let (a, b) = (&self.0, &o.0);
        Block2([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }

    #[inline]
    pub fn sub(&self, o: &Block2) -> Block2 {
        let (a, b) = (&self.0, &o.0);
        Block2([[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]])
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let m = &self.0;
        (m[0][0].abs() + m[0][1].abs()).max(m[1][0].abs() + m[1][1].abs())
    }
}

#[inline]
pub(crate) fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn add2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
