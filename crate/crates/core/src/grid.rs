use thiserror::Error;

/// Smallest periodic grid the stencils accept.
pub const MIN_PERIODIC_CELLS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("periodic grid needs at least {MIN_PERIODIC_CELLS} cells, got {0}")]
    TooFewCells(usize),
    #[error("grid extent must be positive and finite, got {0}")]
    BadExtent(f64),
    #[error("interval grid needs at least one interior node")]
    Empty,
}

/// Uniform cyclic grid `x_j = j L / n` on one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    n_cells: usize,
    period: f64,
}

impl PeriodicGrid {
    pub fn new(n_cells: usize, period: f64) -> Result<Self, GridError> {
        if n_cells < MIN_PERIODIC_CELLS {
            return Err(GridError::TooFewCells(n_cells));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(GridError::BadExtent(period));
        }
        Ok(Self { n_cells, period })
    }

    pub fn len(&self) -> usize {
        self.n_cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n_cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.x(j)).collect()
    }

    #[inline]
    pub fn next(&self, j: usize) -> usize {
        if j + 1 == self.n_cells {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    pub fn prev(&self, j: usize) -> usize {
        if j == 0 {
            self.n_cells - 1
        } else {
            j - 1
        }
    }
}

/// Uniform grid on `[left, right]` with `n_interior` unknowns; both endpoints
/// carry homogeneous Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalGrid {
    left: f64,
    right: f64,
    n_interior: usize,
}

impl IntervalGrid {
    pub fn new(left: f64, right: f64, n_interior: usize) -> Result<Self, GridError> {
        if n_interior == 0 {
            return Err(GridError::Empty);
        }
        let w = right - left;
        if !(w.is_finite() && w > 0.0) {
            return Err(GridError::BadExtent(w));
        }
        Ok(Self { left, right, n_interior })
    }

    /// `(-half_width, half_width)` with spacing as close as possible to `target_h`
    /// while keeping both endpoints on the grid.
    pub fn symmetric(half_width: f64, target_h: f64) -> Result<Self, GridError> {
        Self::with_spacing(-half_width, half_width, target_h)
    }

    pub fn with_spacing(left: f64, right: f64, target_h: f64) -> Result<Self, GridError> {
        if !(target_h.is_finite() && target_h > 0.0) {
            return Err(GridError::BadExtent(target_h));
        }
        let cells = ((right - left) / target_h).round().max(2.0) as usize;
        Self::new(left, right, cells - 1)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.right - self.left)
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn spacing(&self) -> f64 {
        (self.right - self.left) / (self.n_interior + 1) as f64
    }

    /// Interior node `i` in `0..n_interior`.
    pub fn interior_x(&self, i: usize) -> f64 {
        self.left + (i + 1) as f64 * self.spacing()
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (0..self.n_interior).map(|i| self.interior_x(i)).collect()
    }

    /// All nodes including both boundaries.
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_interior + 2).map(|i| self.left + i as f64 * h).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_indexing() {
        let g = PeriodicGrid::new(8, 2.0).unwrap();
        assert_eq!(g.next(7), 0);
        assert_eq!(g.prev(0), 7);
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.x(4), 1.0);
    }

    #[test]
    fn rejects_small_grids() {
        assert_eq!(PeriodicGrid::new(4, 1.0), Err(GridError::TooFewCells(4)));
        assert!(PeriodicGrid::new(16, -1.0).is_err());
    }

    #[test]
    fn interval_spacing() {
        let g = IntervalGrid::symmetric(10.0, 1.0 / 256.0).unwrap();
        assert_eq!(g.n_interior(), 5119);
        assert!((g.spacing() - 1.0 / 256.0).abs() < 1e-15);
        let nodes = g.nodes();
        assert_eq!(nodes[0], -10.0);
        assert!((nodes[nodes.len() - 1] - 10.0).abs() < 1e-12);
    }
}
