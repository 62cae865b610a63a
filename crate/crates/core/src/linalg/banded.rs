use super::LinalgError;

/// Square matrix with `bw` sub- and super-diagonals, stored by rows.
///
/// Entry `(i, j)` with `|i - j| <= bw` lives at `data[i * (2 bw + 1) + (j + bw - i)]`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw, "({i}, {j}) outside band {}", self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let w = 2 * self.bw + 1;
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(self.n - 1);
                let row = &self.data[i * w..(i + 1) * w];
                (lo..=hi).map(|j| row[j + self.bw - i] * x[j]).sum()
            })
            .collect()
    }
}

/// In-place LU of a banded matrix without pivoting; the factors stay in the band.
#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn factor(mut m: BandedMatrix) -> Result<Self, LinalgError> {
        let (n, bw) = (m.n, m.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = m.data[k * w + bw];
            if pivot.abs() < 1e-300 || !pivot.is_finite() {
                return Err(LinalgError::SingularPivot { row: k, pivot });
            }
            let hi = (k + bw).min(n - 1);
            let len = hi - k;
            let (head, tail) = m.data.split_at_mut((k + 1) * w);
            let pivot_row = &head[k * w + bw + 1..k * w + bw + 1 + len];
            for i in k + 1..=hi {
                let ik = (i - k - 1) * w + (k + bw - i);
                let l = tail[ik] / pivot;
                tail[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for (a, &b) in tail[ik + 1..ik + 1 + len].iter_mut().zip(pivot_row) {
                    *a -= l * b;
                }
            }
        }
        Ok(Self { m })
    }

    pub fn len(&self) -> usize {
        self.m.n
    }

    pub fn is_empty(&self) -> bool {
        self.m.n == 0
    }

    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw) = (self.m.n, self.m.bw);
        let w = 2 * bw + 1;
        let d = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for j in lo..i {
                s -= d[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= d[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / d[i * w + bw];
        }
    }
}
