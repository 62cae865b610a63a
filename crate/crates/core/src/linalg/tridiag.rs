use super::LinalgError;

/// Thomas factorization of a scalar tridiagonal matrix.
///
/// Row `j` is `lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1]`; `lower[0]`
/// and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    inv_pivot: Vec<f64>,
    mult: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagLu {
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self, LinalgError> {
        let n = diag.len();
        if n == 0 {
            return Err(LinalgError::TooSmall(0));
        }
        let mut inv_pivot = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n);
        for j in 0..n {
            let (m, p) = if j == 0 {
                (0.0, diag[0])
            } else {
                let m = lower[j] * inv_pivot[j - 1];
                (m, diag[j] - m * upper[j - 1])
            };
            if p.abs() < 1e-300 || !p.is_finite() {
                return Err(LinalgError::SingularPivot { row: j, pivot: p });
            }
            inv_pivot.push(1.0 / p);
            mult.push(m);
        }
        Ok(Self { inv_pivot, mult, upper: upper[..n].to_vec() })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.len();
        for j in 1..n {
            b[j] -= self.mult[j] * b[j - 1];
        }
        b[n - 1] *= self.inv_pivot[n - 1];
        for j in (0..n - 1).rev() {
            b[j] = (b[j] - self.upper[j] * b[j + 1]) * self.inv_pivot[j];
        }
    }
}

/// Cyclic tridiagonal factorization by bordering on the last unknown.
#[derive(Debug, Clone)]
pub struct CyclicTridiagLu {
    chain: TridiagLu,
    spike: Vec<f64>,
    lower_last: f64,
    upper_last: f64,
    inv_schur: f64,
}

impl CyclicTridiagLu {
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self, LinalgError> {
        let n = diag.len();
        if n < 3 {
            return Err(LinalgError::TooSmall(n));
        }
        let k = n - 1;
        let chain = TridiagLu::factor(&lower[..k], &diag[..k], &upper[..k])?;
        let mut spike = vec![0.0; k];
        spike[0] -= lower[0];
        spike[k - 1] -= upper[k - 1];
        chain.solve(&mut spike);
        let schur = diag[k] + lower[k] * spike[k - 1] + upper[k] * spike[0];
        if schur.abs() < 1e-300 || !schur.is_finite() {
            return Err(LinalgError::SingularPivot { row: k, pivot: schur });
        }
        Ok(Self { chain, spike, lower_last: lower[k], upper_last: upper[k], inv_schur: 1.0 / schur })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let k = self.spike.len();
        let last = b[k];
        self.chain.solve(&mut b[..k]);
        let xl = (last - self.lower_last * b[k - 1] - self.upper_last * b[0]) * self.inv_schur;
        b[k] = xl;
        for j in 0..k {
            b[j] += self.spike[j] * xl;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64], cyclic: bool) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|j| {
                let mut y = diag[j] * x[j];
                if j > 0 {
                    y += lower[j] * x[j - 1];
                } else if cyclic {
                    y += lower[0] * x[n - 1];
                }
                if j + 1 < n {
                    y += upper[j] * x[j + 1];
                } else if cyclic {
                    y += upper[j] * x[0];
                }
                y
            })
            .collect()
    }

    #[test]
    fn round_trips() {
        for n in [3usize, 4, 9, 100] {
            let lower: Vec<f64> = (0..n).map(|j| -1.0 - 0.1 * (j % 3) as f64).collect();
            let upper: Vec<f64> = (0..n).map(|j| -0.5 - 0.2 * (j % 2) as f64).collect();
            let diag: Vec<f64> = (0..n).map(|j| 2.5 + 0.01 * j as f64).collect();
            let x: Vec<f64> = (0..n).map(|j| (j as f64 * 1.3).sin()).collect();
            for cyclic in [false, true] {
                let mut b = apply(&lower, &diag, &upper, &x, cyclic);
                if cyclic {
                    CyclicTridiagLu::factor(&lower, &diag, &upper).unwrap().solve(&mut b);
                } else {
                    TridiagLu::factor(&lower, &diag, &upper).unwrap().solve(&mut b);
                }
                for j in 0..n {
                    assert!((b[j] - x[j]).abs() < 1e-13, "n={n} cyclic={cyclic}");
                }
            }
        }
    }

    #[test]
    fn singular_detected() {
        let r = TridiagLu::factor(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]);
        assert!(matches!(r, Err(LinalgError::SingularPivot { row: 0, .. })));
    }
}
