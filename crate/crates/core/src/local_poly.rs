//! Multivariate local polynomial regression of arbitrary order.
//!
//! The design at an evaluation point `s` uses the monomials `((S_i - s)/g)^u`
//! for every multi-index `u` with total degree `u_+ <= q`. Multi-indices are
//! grouped by degree and, within a degree block, ordered lexicographically
//! with the last coordinate taking priority: for `p = 2, q = 2` the order is
//! `(0,0), (0,1), (1,0), (0,2), (1,1), (2,0)`.
//!
//! Fits are exact weighted least squares: only observations inside the
//! closed window `max_j |S_ij - s_j| / g_j <= 1` enter, and the Gram matrix
//! is solved by a pivoted Cholesky factorization. A window whose Gram matrix
//! is numerically rank deficient is reported as [`Error::SingularWindow`]
//! unless a ridge term is configured.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{PivotedCholesky, SquareMatrix, RANK_TOL};
use crate::points::Points;
use crate::quadrature;

const MOMENT_TOL: f64 = 1e-12;

/// Ordered multi-index basis of total degree at most `order` in `dim` variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexBasis {
    dim: usize,
    order: usize,
    indices: Vec<Vec<usize>>,
}

impl MultiIndexBasis {
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("basis dimension must be at least 1"));
        }
        let mut indices = Vec::new();
        for degree in 0..=order {
            let mut block = Vec::new();
            let mut current = vec![0; dim];
            compositions(degree, 0, &mut current, &mut block);
            // Highest priority on the last position: (0,..,0,i) first.
            block.sort_by(|a: &Vec<usize>, b: &Vec<usize>| b.iter().rev().cmp(a.iter().rev()));
            indices.extend(block);
        }
        Ok(MultiIndexBasis {
            dim,
            order,
            indices,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Total number of basis monomials `N`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    /// Number of multi-indices of total degree exactly `degree`.
    pub fn block_len(&self, degree: usize) -> usize {
        binomial(degree + self.dim - 1, self.dim - 1)
    }

    /// Position of the degree-one monomial in coordinate `j`.
    pub fn linear_position(&self, j: usize) -> Option<usize> {
        self.indices
            .iter()
            .position(|u| u.iter().sum::<usize>() == 1 && u[j] == 1)
    }

    /// Evaluates all monomials at `t` into `out`.
    pub fn monomials_into(&self, t: &[f64], powers: &mut Vec<f64>, out: &mut [f64]) {
        let stride = self.order + 1;
        powers.clear();
        powers.resize(self.dim * stride, 1.0);
        for (j, &tj) in t.iter().enumerate() {
            for k in 1..stride {
                powers[j * stride + k] = powers[j * stride + k - 1] * tj;
            }
        }
        for (o, u) in out.iter_mut().zip(&self.indices) {
            *o = u
                .iter()
                .enumerate()
                .fold(1.0, |acc, (j, &e)| acc * powers[j * stride + e]);
        }
    }

    pub fn monomials(&self, t: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.monomials_into(t, &mut Vec::new(), &mut out);
        out
    }
}

fn compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

pub(crate) fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Result of a single local fit. `coeffs` are on the original covariate
/// scale, in basis order; `coeffs[0]` is the fitted value.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub alpha: f64,
    pub coeffs: Vec<f64>,
    pub effective_n: usize,
}

/// Weighted normal equations at one point, on the bandwidth-scaled design.
#[derive(Debug, Clone)]
pub struct LocalDesign {
    pub gram: SquareMatrix,
    pub rhs: Vec<f64>,
    pub effective_n: usize,
}

/// Local polynomial smoother of `response` on `covariates`.
#[derive(Debug, Clone)]
pub struct LocalPolyModel {
    basis: MultiIndexBasis,
    covariates: Points,
    response: Vec<f64>,
    bandwidth: Vec<f64>,
    kernel: KernelSpec,
    ridge: f64,
    // Copies sorted by the first coordinate for window search.
    sorted_x: Vec<f64>,
    sorted_y: Vec<f64>,
}

impl LocalPolyModel {
    /// `bandwidth` holds either one shared value or one value per dimension.
    pub fn new(
        covariates: Points,
        response: Vec<f64>,
        order: usize,
        bandwidth: &[f64],
        kernel: KernelSpec,
    ) -> Result<Self> {
        let dim = covariates.dim();
        if covariates.len() != response.len() {
            return Err(Error::Dimension {
                expected: covariates.len(),
                got: response.len(),
            });
        }
        let bandwidth = match bandwidth.len() {
            1 => vec![bandwidth[0]; dim],
            l if l == dim => bandwidth.to_vec(),
            l => return Err(Error::Dimension { expected: dim, got: l }),
        };
        if let Some(b) = bandwidth.iter().find(|&&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::param(format!("bandwidth must be positive, got {b}")));
        }
        if covariates.is_empty() {
            return Err(Error::param("local polynomial fit needs a nonempty sample"));
        }
        let basis = MultiIndexBasis::new(dim, order)?;
        let mut idx: Vec<usize> = (0..covariates.len()).collect();
        idx.sort_by(|&a, &b| covariates.row(a)[0].total_cmp(&covariates.row(b)[0]));
        let mut sorted_x = Vec::with_capacity(covariates.as_slice().len());
        let mut sorted_y = Vec::with_capacity(response.len());
        for &i in &idx {
            sorted_x.extend_from_slice(covariates.row(i));
            sorted_y.push(response[i]);
        }
        Ok(LocalPolyModel {
            basis,
            covariates,
            response,
            bandwidth,
            kernel,
            ridge: 0.0,
            sorted_x,
            sorted_y,
        })
    }

    /// Adds `epsilon * I` to the scaled Gram matrix at every fit.
    pub fn with_ridge(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::param(format!("ridge must be nonnegative, got {epsilon}")));
        }
        self.ridge = epsilon;
        Ok(self)
    }

    pub fn basis(&self) -> &MultiIndexBasis {
        &self.basis
    }

    pub fn covariates(&self) -> &Points {
        &self.covariates
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn window(&self, s0: f64) -> std::ops::Range<usize> {
        let dim = self.basis.dim;
        let n = self.sorted_y.len();
        let lo = s0 - self.bandwidth[0];
        let hi = s0 + self.bandwidth[0];
        let first = |i: usize| self.sorted_x[i * dim];
        let start = partition_point(n, |i| first(i) < lo);
        let end = partition_point(n, |i| first(i) <= hi);
        start..end.max(start)
    }

    /// Weighted normal equations at `s` on the scaled design `(S_i - s)/g`.
    pub fn design_at(&self, s: &[f64]) -> Result<LocalDesign> {
        let dim = self.basis.dim;
        if s.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: s.len(),
            });
        }
        let nb = self.basis.len();
        let mut gram = SquareMatrix::zeros(nb);
        let mut rhs = vec![0.0; nb];
        let mut mono = vec![0.0; nb];
        let mut powers = Vec::new();
        let mut t = vec![0.0; dim];
        let mut effective_n = 0;
        'points: for i in self.window(s[0]) {
            let row = &self.sorted_x[i * dim..(i + 1) * dim];
            let mut w = 1.0;
            for j in 0..dim {
                let u = (row[j] - s[j]) / self.bandwidth[j];
                if u.abs() > 1.0 {
                    continue 'points;
                }
                t[j] = u;
                w *= self.kernel.eval(u) / self.bandwidth[j];
            }
            if w <= 0.0 {
                continue;
            }
            effective_n += 1;
            self.basis.monomials_into(&t, &mut powers, &mut mono);
            let yi = self.sorted_y[i];
            for a in 0..nb {
                let wa = w * mono[a];
                rhs[a] += wa * yi;
                for b in 0..=a {
                    gram.add(a, b, wa * mono[b]);
                }
            }
        }
        gram.symmetrize_from_lower();
        Ok(LocalDesign {
            gram,
            rhs,
            effective_n,
        })
    }

    /// Local polynomial fit at `s`.
    pub fn fit_at(&self, s: &[f64]) -> Result<LocalFit> {
        let LocalDesign {
            mut gram,
            rhs,
            effective_n,
        } = self.design_at(s)?;
        let nb = self.basis.len();
        let singular = || Error::SingularWindow {
            point: s.to_vec(),
            effective_n,
            basis_size: nb,
        };
        if effective_n == 0 {
            return Err(singular());
        }
        if self.ridge > 0.0 {
            for a in 0..nb {
                gram.add(a, a, self.ridge);
            }
        }
        let chol = PivotedCholesky::factor(&gram, RANK_TOL).map_err(|_| singular())?;
        let mut coeffs = chol.solve(&rhs);
        for (c, u) in coeffs.iter_mut().zip(self.basis.indices()) {
            for (j, &e) in u.iter().enumerate() {
                *c /= self.bandwidth[j].powi(e as i32);
            }
        }
        Ok(LocalFit {
            alpha: coeffs[0],
            coeffs,
            effective_n,
        })
    }

    /// Fitted values at every grid point; errors carry the grid index.
    pub fn predict_grid(&self, grid: &Points) -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Err(Error::param("prediction grid is empty"));
        }
        self.fit_grid(grid)
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.map(|f| f.alpha).map_err(|e| Error::AtGridPoint {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Per-point fits without aborting on the first failure.
    pub fn fit_grid(&self, grid: &Points) -> Vec<Result<LocalFit>> {
        (0..grid.len())
            .into_par_iter()
            .map(|i| self.fit_at(grid.row(i)))
            .collect()
    }

    /// Fitted values at the training covariates, in the original order.
    pub fn fitted_at_training(&self) -> Result<Vec<f64>> {
        self.predict_grid(&self.covariates)
    }

    /// Degree-one coefficients of the local fit, one per coordinate.
    pub fn gradient_at(&self, s: &[f64]) -> Result<Vec<f64>> {
        if self.basis.order == 0 {
            return Err(Error::param(
                "gradient needs a local polynomial of order at least 1",
            ));
        }
        let fit = self.fit_at(s)?;
        Ok((0..self.basis.dim)
            .map(|j| fit.coeffs[self.basis.linear_position(j).expect("order >= 1")])
            .collect())
    }
}

fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Kernel moment matrices `M_q` (population) and `M_{n,q}(x)` (with a
/// design density).
#[derive(Debug, Clone)]
pub struct MomentMatrices {
    kernel: KernelSpec,
    basis: MultiIndexBasis,
    mq: SquareMatrix,
}

impl MomentMatrices {
    pub fn new(kernel: KernelSpec, basis: &MultiIndexBasis) -> Self {
        let max_deg = 2 * basis.order;
        let univariate: Vec<f64> = (0..=max_deg)
            .map(|k| {
                if k % 2 == 1 {
                    0.0
                } else {
                    quadrature::integrate(
                        |u| u.powi(k as i32) * kernel.eval(u),
                        -1.0,
                        1.0,
                        MOMENT_TOL,
                    )
                }
            })
            .collect();
        let nb = basis.len();
        let mut mq = SquareMatrix::zeros(nb);
        for (a, ua) in basis.indices().iter().enumerate() {
            for (b, ub) in basis.indices().iter().enumerate() {
                let v = ua
                    .iter()
                    .zip(ub)
                    .fold(1.0, |acc, (&x, &y)| acc * univariate[x + y]);
                mq.set(a, b, v);
            }
        }
        MomentMatrices {
            kernel,
            basis: basis.clone(),
            mq,
        }
    }

    pub fn mq(&self) -> &SquareMatrix {
        &self.mq
    }

    pub fn basis(&self) -> &MultiIndexBasis {
        &self.basis
    }

    /// `[M_{n,q}(x)]_{ab} = int L(u) u^{a+b} f(x + g u) du` over `[-1,1]^p`.
    pub fn mnq_at<F: Fn(&[f64]) -> f64>(&self, density: F, x: &[f64], g: f64) -> SquareMatrix {
        let p = self.basis.dim;
        let nb = self.basis.len();
        let bounds = vec![(-1.0, 1.0); p];
        let mut cache: std::collections::HashMap<Vec<usize>, f64> = Default::default();
        let mut out = SquareMatrix::zeros(nb);
        for (a, ua) in self.basis.indices().iter().enumerate() {
            for (b, ub) in self.basis.indices().iter().enumerate().take(a + 1) {
                let key: Vec<usize> = ua.iter().zip(ub).map(|(x, y)| x + y).collect();
                let v = *cache.entry(key.clone()).or_insert_with(|| {
                    quadrature::integrate_box(
                        |u| {
                            let mut w = 1.0;
                            let mut shifted = Vec::with_capacity(p);
                            for j in 0..p {
                                w *= self.kernel.eval(u[j]) * u[j].powi(key[j] as i32);
                                shifted.push(x[j] + g * u[j]);
                            }
                            if w == 0.0 {
                                0.0
                            } else {
                                w * density(&shifted)
                            }
                        },
                        &bounds,
                        1e-10,
                    )
                });
                out.set(a, b, v);
                out.set(b, a, v);
            }
        }
        out
    }
}

/// Equivalent kernel `L*(t) = e_1^T M_q^{-1} mu(t) L(t)` of the local
/// polynomial smoother (product kernel `L` in `p` dimensions).
#[derive(Debug, Clone)]
pub struct EquivalentKernel {
    kernel: KernelSpec,
    basis: MultiIndexBasis,
    weights: Vec<f64>,
}

impl EquivalentKernel {
    pub fn new(kernel: KernelSpec, basis: &MultiIndexBasis) -> Result<Self> {
        let moments = MomentMatrices::new(kernel, basis);
        let mut e1 = vec![0.0; basis.len()];
        e1[0] = 1.0;
        let chol = PivotedCholesky::factor(moments.mq(), RANK_TOL)
            .map_err(|_| Error::param("moment matrix M_q is singular"))?;
        Ok(EquivalentKernel {
            kernel,
            basis: basis.clone(),
            weights: chol.solve(&e1),
        })
    }

    /// Polynomial weights `M_q^{-1} e_1` in basis order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        let base: f64 = t.iter().map(|&x| self.kernel.eval(x)).product();
        if base == 0.0 {
            return 0.0;
        }
        let mono = self.basis.monomials(t);
        base * mono.iter().zip(&self.weights).map(|(m, w)| m * w).sum::<f64>()
    }

    /// Univariate convenience for `p = 1`.
    pub fn eval1(&self, t: f64) -> f64 {
        self.eval(&[t])
    }
}
