//! Small dense symmetric solves for local weighted least squares.
//!
//! The Gram matrices here are at most a few dozen rows wide, so a
//! diagonally pivoted Cholesky factorization is both adequate and cheap.
//! Pivoting also gives a direct rank test: the factorization stops as soon
//! as the largest remaining Schur-complement diagonal drops below
//! `rel_tol` times the first pivot.

/// Relative pivot threshold for declaring a Gram matrix rank deficient.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient {
    pub rank: usize,
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        SquareMatrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Mirrors the lower triangle into the upper one.
    pub fn symmetrize_from_lower(&mut self) {
        for i in 0..self.n {
            for j in 0..i {
                let v = self.get(i, j);
                self.set(j, i, v);
            }
        }
    }
}

/// `P A P^T = L L^T` with `P` the permutation stored in `perm`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    n: usize,
    lower: Vec<f64>,
    perm: Vec<usize>,
    pivots: Vec<f64>,
}

impl PivotedCholesky {
    pub fn factor(a: &SquareMatrix, rel_tol: f64) -> Result<Self, RankDeficient> {
        let n = a.n;
        let mut w = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut largest = 0.0;
        for k in 0..n {
            let (jmax, dmax) = (k..n)
                .map(|j| (j, w[j * n + j]))
                .fold((k, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            if jmax != k {
                for c in 0..n {
                    w.swap(k * n + c, jmax * n + c);
                }
                for r in 0..n {
                    w.swap(r * n + k, r * n + jmax);
                }
                perm.swap(k, jmax);
            }
            if k == 0 {
                largest = dmax;
            }
            if !(dmax > rel_tol * largest) || !dmax.is_finite() {
                return Err(RankDeficient { rank: k });
            }
            pivots.push(dmax);
            let lkk = dmax.sqrt();
            w[k * n + k] = lkk;
            for i in k + 1..n {
                w[i * n + k] /= lkk;
            }
            for i in k + 1..n {
                let lik = w[i * n + k];
                for j in k + 1..=i {
                    w[i * n + j] -= lik * w[j * n + k];
                }
            }
            for i in k + 1..n {
                for j in k + 1..i {
                    w[j * n + i] = w[i * n + j];
                }
            }
        }
        Ok(PivotedCholesky {
            n,
            lower: w,
            perm,
            pivots,
        })
    }

    /// Schur-complement diagonals in elimination order.
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lower[i * n + j] * y[j];
            }
            y[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lower[j * n + i] * y[j];
            }
            y[i] = s / self.lower[i * n + i];
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`.
pub fn solve_symmetric(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>, RankDeficient> {
    Ok(PivotedCholesky::factor(a, RANK_TOL)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> SquareMatrix {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        let b: Vec<f64> = (0..n * n).map(|_| next()).collect();
        let mut a = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
                a.set(i, j, v + if i == j { 0.1 } else { 0.0 });
            }
        }
        a
    }

    #[test]
    fn solves_random_spd() {
        for seed in 1..20 {
            let a = spd(7, seed);
            let x_true: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
            let b = a.mul_vec(&x_true);
            let x = solve_symmetric(&a, &b).unwrap();
            for (u, v) in x.iter().zip(&x_true) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn detects_rank_deficiency() {
        // Rank-one matrix v v^T.
        let v = [1.0, 2.0, 3.0];
        let mut a = SquareMatrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                a.set(i, j, v[i] * v[j]);
            }
        }
        let err = solve_symmetric(&a, &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.rank, 1);
    }

    #[test]
    fn pivots_are_nonincreasing_for_diagonal() {
        let a = SquareMatrix::from_row_major(3, vec![1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let f = PivotedCholesky::factor(&a, RANK_TOL).unwrap();
        assert_eq!(f.pivots(), &[5.0, 3.0, 1.0]);
        let x = f.solve(&[1.0, 5.0, 3.0]);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }
}
