use super::{add2, sub2, Block2, LinalgError, Vec2};

/// Block tridiagonal matrix with 2x2 blocks.
///
/// Row `j` reads `lower[j] x[j-1] + diag[j] x[j] + upper[j] x[j+1]`. When
/// `cyclic`, indices wrap (`lower[0]` couples to `x[n-1]`, `upper[n-1]` to
/// `x[0]`); otherwise `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    pub lower: Vec<Block2>,
    pub diag: Vec<Block2>,
    pub upper: Vec<Block2>,
    pub cyclic: bool,
}

impl BlockTridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn neighbors(&self, j: usize) -> (Option<usize>, Option<usize>) {
        let n = self.len();
        let prev = if j > 0 {
            Some(j - 1)
        } else if self.cyclic {
            Some(n - 1)
        } else {
            None
        };
        let next = if j + 1 < n {
            Some(j + 1)
        } else if self.cyclic {
            Some(0)
        } else {
            None
        };
        (prev, next)
    }

    pub fn apply(&self, x: &[Vec2]) -> Vec<Vec2> {
        (0..self.len())
            .map(|j| {
                let mut y = self.diag[j].apply(x[j]);
                let (prev, next) = self.neighbors(j);
                if let Some(p) = prev {
                    y = add2(y, self.lower[j].apply(x[p]));
                }
                if let Some(q) = next {
                    y = add2(y, self.upper[j].apply(x[q]));
                }
                y
            })
            .collect()
    }

    /// Smallest Gershgorin row bound `min_i (a_ii - sum_{k != i} |a_ik|)`.
    pub fn gershgorin_lower(&self) -> f64 {
        let mut lo = f64::INFINITY;
        for j in 0..self.len() {
            let (prev, next) = self.neighbors(j);
            for r in 0..2 {
                let d = &self.diag[j].0;
                let mut off = d[r][1 - r].abs();
                if prev.is_some() {
                    off += self.lower[j].0[r].iter().map(|v| v.abs()).sum::<f64>();
                }
                if next.is_some() {
                    off += self.upper[j].0[r].iter().map(|v| v.abs()).sum::<f64>();
                }
                lo = lo.min(d[r][r] - off);
            }
        }
        lo
    }

    /// Dense row-major copy, unknowns ordered `(u_0, v_0, u_1, v_1, ...)`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; 2 * n]; 2 * n];
        for j in 0..n {
            let (prev, next) = self.neighbors(j);
            let mut put = |col: usize, b: &Block2| {
                for r in 0..2 {
                    for c in 0..2 {
                        m[2 * j + r][2 * col + c] += b.0[r][c];
                    }
                }
            };
            put(j, &self.diag[j]);
            if let Some(p) = prev {
                put(p, &self.lower[j]);
            }
            if let Some(q) = next {
                put(q, &self.upper[j]);
            }
        }
        m
    }

    /// Same matrix with `shift` subtracted from the diagonal.
    pub fn shifted(&self, shift: f64) -> BlockTridiag {
        let s = Block2::scalar(shift);
        BlockTridiag {
            lower: self.lower.clone(),
            diag: self.diag.iter().map(|d| d.sub(&s)).collect(),
            upper: self.upper.clone(),
            cyclic: self.cyclic,
        }
    }
}

/// Block LU factorization without pivoting. Cyclic systems are handled by
/// bordering: the first `n-1` unknowns are expressed through the last one,
/// which is then found from a 2x2 Schur complement.
#[derive(Debug, Clone)]
pub struct BlockTridiagLu {
    /// Inverse pivots of the open chain.
    pivots_inv: Vec<Block2>,
    /// Multipliers `lower[j] * pivot[j-1]^-1`.
    mult: Vec<Block2>,
    upper: Vec<Block2>,
    cyclic: Option<CyclicPart>,
}

#[derive(Debug, Clone)]
struct CyclicPart {
    /// `x[j] = y[j] + spike[j] x[n-1]` for `j < n-1`.
    spike: Vec<Block2>,
    lower_last: Block2,
    upper_last: Block2,
    schur_inv: Block2,
}

impl BlockTridiagLu {
    pub fn factor(m: &BlockTridiag) -> Result<Self, LinalgError> {
        let n = m.len();
        if n == 0 || (m.cyclic && n < 3) {
            return Err(LinalgError::TooSmall(n));
        }
        if !m.cyclic {
            let (pivots_inv, mult) = factor_chain(&m.lower, &m.diag, &m.upper, n)?;
            return Ok(Self { pivots_inv, mult, upper: m.upper[..n].to_vec(), cyclic: None });
        }
        let k = n - 1;
        let (pivots_inv, mult) = factor_chain(&m.lower, &m.diag, &m.upper, k)?;
        let mut chain = Self { pivots_inv, mult, upper: m.upper[..k].to_vec(), cyclic: None };
        // Column coupling to x[n-1]: lower[0] in row 0, upper[k-1] in row k-1.
        let spike_cols: [Vec<Vec2>; 2] = std::array::from_fn(|c| {
            let mut rhs = vec![[0.0; 2]; k];
            let l0 = m.lower[0].0;
            let uk = m.upper[k - 1].0;
            rhs[0] = sub2(rhs[0], [l0[0][c], l0[1][c]]);
            rhs[k - 1] = sub2(rhs[k - 1], [uk[0][c], uk[1][c]]);
            chain.solve_chain(&mut rhs);
            rhs
        });
        let spike: Vec<Block2> = (0..k)
            .map(|j| Block2([[spike_cols[0][j][0], spike_cols[1][j][0]], [spike_cols[0][j][1], spike_cols[1][j][1]]]))
            .collect();
        let lower_last = m.lower[k];
        let upper_last = m.upper[k];
        let schur = m.diag[k].add(&lower_last.mul(&spike[k - 1])).add(&upper_last.mul(&spike[0]));
        let schur_inv = schur.inverse().ok_or(LinalgError::SingularPivot { row: k, pivot: schur.det() })?;
        chain.cyclic = Some(CyclicPart { spike, lower_last, upper_last, schur_inv });
        Ok(chain)
    }

    fn solve_chain(&self, b: &mut [Vec2]) {
        let k = self.pivots_inv.len();
        for j in 1..k {
            b[j] = sub2(b[j], self.mult[j].apply(b[j - 1]));
        }
        b[k - 1] = self.pivots_inv[k - 1].apply(b[k - 1]);
        for j in (0..k - 1).rev() {
            b[j] = self.pivots_inv[j].apply(sub2(b[j], self.upper[j].apply(b[j + 1])));
        }
    }

    /// Solves in place.
    pub fn solve(&self, b: &mut [Vec2]) {
        match &self.cyclic {
            None => self.solve_chain(b),
            Some(cy) => {
                let k = self.pivots_inv.len();
                let last = b[k];
                self.solve_chain(&mut b[..k]);
                let rhs = sub2(sub2(last, cy.lower_last.apply(b[k - 1])), cy.upper_last.apply(b[0]));
                let xl = cy.schur_inv.apply(rhs);
                b[k] = xl;
                for j in 0..k {
                    b[j] = add2(b[j], cy.spike[j].apply(xl));
                }
            }
        }
    }
}

fn factor_chain(
    lower: &[Block2],
    diag: &[Block2],
    upper: &[Block2],
    k: usize,
) -> Result<(Vec<Block2>, Vec<Block2>), LinalgError> {
    let mut pivots_inv = Vec::with_capacity(k);
    let mut mult = Vec::with_capacity(k);
    for j in 0..k {
        let (g, pivot) = if j == 0 {
            (Block2::ZERO, diag[0])
        } else {
            let g = lower[j].mul(&pivots_inv[j - 1]);
            (g, diag[j].sub(&g.mul(&upper[j - 1])))
        };
        let inv = pivot.inverse().ok_or(LinalgError::SingularPivot { row: j, pivot: pivot.det() })?;
        pivots_inv.push(inv);
        mult.push(g);
    }
    Ok((pivots_inv, mult))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_m_matrix(n: usize, cyclic: bool, seed: u64) -> BlockTridiag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = || Block2::new(-rng.gen::<f64>(), -0.1 * rng.gen::<f64>(), -0.1 * rng.gen::<f64>(), -rng.gen::<f64>());
        let lower: Vec<_> = (0..n).map(|_| off()).collect();
        let upper: Vec<_> = (0..n).map(|_| off()).collect();
        let diag = (0..n)
            .map(|j| {
                let s = 0.5 + lower[j].norm_inf() + upper[j].norm_inf();
                Block2::new(s + 0.3, -0.3, -0.2, s + 0.2)
            })
            .collect();
        BlockTridiag { lower, diag, upper, cyclic }
    }

    fn check(m: &BlockTridiag) {
        let n = m.len();
        let x: Vec<Vec2> = (0..n).map(|j| [(j as f64).sin(), (j as f64 * 0.7).cos()]).collect();
        let mut b = m.apply(&x);
        BlockTridiagLu::factor(m).unwrap().solve(&mut b);
        for j in 0..n {
            assert!((b[j][0] - x[j][0]).abs() < 1e-12 && (b[j][1] - x[j][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn open_chain_round_trip() {
        for n in [1, 2, 5, 64] {
            check(&random_m_matrix(n, false, n as u64));
        }
    }

    #[test]
    fn cyclic_round_trip() {
        for n in [3, 4, 17, 256] {
            check(&random_m_matrix(n, true, 100 + n as u64));
        }
    }

    #[test]
    fn dense_copy_matches_apply() {
        let m = random_m_matrix(6, true, 9);
        let d = m.to_dense();
        let x: Vec<Vec2> = (0..6).map(|j| [j as f64, 1.0 - j as f64]).collect();
        let y = m.apply(&x);
        let flat: Vec<f64> = x.iter().flat_map(|v| v.iter().copied()).collect();
        for (i, row) in d.iter().enumerate() {
            let dot: f64 = row.iter().zip(&flat).map(|(a, b)| a * b).sum();
            assert!((dot - y[i / 2][i % 2]).abs() < 1e-13);
        }
    }
}
