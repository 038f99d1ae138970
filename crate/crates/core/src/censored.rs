//! Nonparametric censored regression `Y = max(0, mu0(X) - U)`.
//!
//! With `r0(x) = E(Y | X = x)` and `q0(r) = P(Y > 0 | r0(X) = r)`, the
//! location function satisfies `mu0(x) = lambda0 - int_{r0(x)}^{lambda0} dr / q0(r)`.
//! The estimator plugs in a local polynomial `r_hat` and a local linear
//! `q_hat` fitted on the generated covariates `r_hat(X_i)`, with
//! `lambda = max_i r_hat(X_i)`.

use std::sync::Arc;

use rand::Rng;

use crate::density::kde;
use crate::dgp::{CovariateLaw, PointFn, SimRng};
use crate::error::{Error, Result};
use crate::generated::check_first_stage_kernel;
use crate::kernel::KernelSpec;
use crate::local_poly::LocalPolyModel;
use crate::points::Points;

pub const DEFAULT_NODES: usize = 513;
pub const DEFAULT_CLIP: f64 = 0.05;

/// Sign in front of the integral. Only `Minus` is consistent; `Plus` exists
/// to check that claim empirically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegralSign {
    Minus,
    Plus,
}

#[derive(Debug, Clone)]
pub struct CensoredConfig {
    /// Order of the local polynomial for `r_hat`.
    pub q: usize,
    /// Bandwidth of `r_hat`.
    pub g: f64,
    /// Bandwidth of `q_hat`.
    pub h: f64,
    pub first_kernel: KernelSpec,
    pub second_kernel: KernelSpec,
    pub nodes: usize,
    pub clip: f64,
    pub sign: IntegralSign,
}

impl CensoredConfig {
    pub fn new(q: usize, g: f64, h: f64) -> Self {
        CensoredConfig {
            q,
            g,
            h,
            first_kernel: KernelSpec::Triweight,
            second_kernel: KernelSpec::Triweight,
            nodes: DEFAULT_NODES,
            clip: DEFAULT_CLIP,
            sign: IntegralSign::Minus,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CensoredFit {
    pub grid_x: Points,
    pub mu_hat: Vec<f64>,
    pub r_hat: Vec<f64>,
    /// Integration nodes over `[min r_hat(grid), lambda]`.
    pub q_grid: Vec<f64>,
    /// Unclipped `q_hat` at the nodes (NaN where the fit failed).
    pub q_hat: Vec<f64>,
    pub lambda: f64,
    /// Nodes where the clipping floor was active.
    pub clipped_nodes: usize,
    /// Per grid point: number of clipped nodes inside its integration range.
    pub clipped_per_point: Vec<usize>,
    pub flags: Vec<Option<String>>,
    pub avar: Option<Vec<f64>>,
    /// Generated covariates `r_hat(X_i)` at the sample points.
    pub r_hat_sample: Vec<f64>,
}

pub fn fit_censored(x: &Points, y: &[f64], grid: &Points, config: &CensoredConfig) -> Result<CensoredFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if grid.dim() != x.dim() {
        return Err(Error::Dimension {
            expected: x.dim(),
            got: grid.dim(),
        });
    }
    if grid.is_empty() {
        return Err(Error::param("evaluation grid is empty"));
    }
    if config.nodes < 2 {
        return Err(Error::param("at least two integration nodes are required"));
    }
    if !(config.clip > 0.0 && config.clip < 1.0) {
        return Err(Error::param(format!("clip floor must lie in (0, 1), got {}", config.clip)));
    }
    check_first_stage_kernel(config.first_kernel, x.dim())?;
    if let Some(v) = y.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::DegenerateCensoring(format!(
            "outcomes must be nonnegative (censored at zero), found {v}"
        )));
    }
    let uncensored = y.iter().filter(|v| **v > 0.0).count();
    if uncensored == 0 {
        return Err(Error::DegenerateCensoring("every observation is censored".into()));
    }

    let r_model = LocalPolyModel::new(x.clone(), y.to_vec(), config.q, &[config.g], config.first_kernel)?;
    let r_sample = r_model.fitted_at_training()?;
    let lambda = r_sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut flags: Vec<Option<String>> = vec![None; grid.len()];
    let r_grid: Vec<f64> = r_model
        .fit_grid(grid)
        .into_iter()
        .enumerate()
        .map(|(i, f)| match f {
            Ok(fit) => fit.alpha,
            Err(e) => {
                flags[i] = Some(e.to_string());
                f64::NAN
            }
        })
        .collect();
    for (i, r) in r_grid.iter().enumerate() {
        if r.is_finite() && *r > lambda {
            flags[i] = Some(format!(
                "r_hat = {r} exceeds the integration limit lambda = {lambda}"
            ));
        }
    }
    let lower = r_grid
        .iter()
        .zip(&flags)
        .filter(|(_, f)| f.is_none())
        .map(|(r, _)| *r)
        .fold(lambda, f64::min);
    let m = config.nodes;
    let q_grid: Vec<f64> = (0..m)
        .map(|k| lower + (lambda - lower) * k as f64 / (m - 1) as f64)
        .collect();

    let q_hat: Vec<f64> = if uncensored == y.len() {
        vec![1.0; m]
    } else {
        let indicator: Vec<f64> = y.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
        let q_model = LocalPolyModel::new(
            Points::from_column(r_sample.clone()),
            indicator,
            1,
            &[config.h],
            config.second_kernel,
        )?;
        q_model
            .fit_grid(&Points::from_column(q_grid.clone()))
            .into_iter()
            .map(|f| f.map_or(f64::NAN, |f| f.alpha))
            .collect()
    };
    for k in 1..m {
        if q_hat[k] <= 0.0 && q_hat[k - 1] <= 0.0 && q_grid[k] > q_grid[k - 1] {
            return Err(Error::DegenerateCensoring(format!(
                "estimated uncensored probability is nonpositive on [{}, {}]",
                q_grid[k - 1],
                q_grid[k]
            )));
        }
    }
    let clipped: Vec<bool> = q_hat.iter().map(|q| *q < config.clip).collect();
    let inv: Vec<f64> = q_hat.iter().map(|q| 1.0 / q.max(config.clip)).collect();
    // tail[k] = int_{q_grid[k]}^{lambda} du / q_hat(u) by the trapezoid rule.
    let mut tail = vec![0.0; m];
    for k in (0..m - 1).rev() {
        tail[k] = tail[k + 1] + 0.5 * (q_grid[k + 1] - q_grid[k]) * (inv[k] + inv[k + 1]);
    }
    let step = if m > 1 { q_grid[1] - q_grid[0] } else { 0.0 };
    let mut mu_hat = vec![f64::NAN; grid.len()];
    let mut clipped_per_point = vec![0; grid.len()];
    for (i, &r) in r_grid.iter().enumerate() {
        if flags[i].is_some() {
            continue;
        }
        let k = if step > 0.0 {
            (((r - lower) / step).floor() as usize).min(m - 2)
        } else {
            0
        };
        if let Some(bad) = (k..m).find(|&j| !q_hat[j].is_finite()) {
            flags[i] = Some(format!(
                "q_hat could not be evaluated at node {} inside the integration range",
                q_grid[bad]
            ));
            continue;
        }
        clipped_per_point[i] = clipped[k..].iter().filter(|c| **c).count();
        let integral = if step > 0.0 {
            let w = (r - q_grid[k]) / step;
            let q_r = (1.0 - w) * q_hat[k] + w * q_hat[k + 1];
            let inv_r = 1.0 / q_r.max(config.clip);
            tail[k + 1] + 0.5 * (q_grid[k + 1] - r) * (inv_r + inv[k + 1])
        } else {
            0.0
        };
        mu_hat[i] = match config.sign {
            IntegralSign::Minus => lambda - integral,
            IntegralSign::Plus => lambda + integral,
        };
    }
    Ok(CensoredFit {
        grid_x: grid.clone(),
        mu_hat,
        r_hat: r_grid,
        q_grid,
        q_hat,
        lambda,
        clipped_nodes: clipped.iter().filter(|c| **c).count(),
        clipped_per_point,
        flags,
        avar: None,
        r_hat_sample: r_sample,
    })
}

/// Censored design `Y = max(0, mu0(X) - U)` with `U = c - E`,
/// `E ~ Exponential(mean c)`, so that `E U = 0` and `U <= c`.
#[derive(Clone)]
pub struct CensoredDgp {
    pub name: String,
    pub covariates: CovariateLaw,
    pub mu0: PointFn,
    pub scale: f64,
}

impl std::fmt::Debug for CensoredDgp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CensoredDgp")
            .field("name", &self.name)
            .field("scale", &self.scale)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoredSample {
    pub x: Points,
    pub y: Vec<f64>,
}

impl CensoredDgp {
    pub fn p(&self) -> usize {
        self.covariates.dim()
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        (self.mu0)(x)
    }

    /// `s0(x) = P(Y > 0 | X = x) = P(U < mu0(x))`.
    pub fn s0(&self, x: &[f64]) -> f64 {
        let c = self.scale;
        let mu = self.mu0(x);
        if mu >= c {
            1.0
        } else {
            (-(c - mu) / c).exp()
        }
    }

    /// `r0(x) = E(Y | X = x)`.
    pub fn r0(&self, x: &[f64]) -> f64 {
        let c = self.scale;
        let mu = self.mu0(x);
        if mu >= c {
            mu
        } else {
            c * self.s0(x)
        }
    }

    /// `Var(Y | X = x)`.
    pub fn var_y(&self, x: &[f64]) -> f64 {
        let c = self.scale;
        let mu = self.mu0(x);
        if mu >= c {
            c * c
        } else {
            let s = self.s0(x);
            c * c * s * (2.0 - s)
        }
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> CensoredSample {
        let p = self.p();
        let mut x = vec![0.0; n * p];
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row = &mut x[i * p..(i + 1) * p];
            (self.covariates.sampler)(rng, row);
            let e = -self.scale * (1.0 - rng.random::<f64>()).ln();
            let u = self.scale - e;
            y.push((self.mu0(row) - u).max(0.0));
        }
        CensoredSample {
            x: Points::new(p, x).expect("p >= 1"),
            y,
        }
    }
}

/// Reference design: `X ~ U[0, 1]`, `mu0(x) = 1 + x`, `c = 2.3`, about 29%
/// of observations censored.
pub fn censored_a() -> CensoredDgp {
    CensoredDgp {
        name: "censored-a".into(),
        covariates: CovariateLaw::uniform(vec![(0.0, 1.0)]),
        mu0: Arc::new(|x: &[f64]| 1.0 + x[0]),
        scale: 2.3,
    }
}

/// Asymptotic variance of `sqrt(n g^p)(mu_hat(x) - mu0(x))`:
/// `Var(Y | X = x) R(L)^p / (f_S(x) s0(x)^2)`.
pub fn censored_avar(dgp: &CensoredDgp, x: &[f64], first_kernel: KernelSpec) -> Result<f64> {
    let s0 = dgp.s0(x);
    if !(s0 >= 1e-6) {
        return Err(Error::HeavyCensoring { x: x[0], value: s0 });
    }
    let f = (dgp.covariates.density)(x);
    if !(f > 0.0) {
        return Err(Error::param(format!("covariate density vanishes at {x:?}")));
    }
    let rl = first_kernel.constants().roughness.powi(x.len() as i32);
    Ok(dgp.var_y(x) * rl / (f * s0 * s0))
}

/// Plug-in version of [`censored_avar`] from the sample: kernel density
/// for `f_S`, local linear fits of `1{Y > 0}` and of squared first-stage
/// residuals on `X`, all with bandwidth `g`.
pub fn censored_avar_plugin(x: &Points, y: &[f64], fit: &CensoredFit, config: &CensoredConfig) -> Result<Vec<f64>> {
    let indicator: Vec<f64> = y.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
    let sq: Vec<f64> = y
        .iter()
        .zip(&fit.r_hat_sample)
        .map(|(a, b)| (a - b).powi(2))
        .collect();
    let s_model = LocalPolyModel::new(x.clone(), indicator, 1, &[config.g], config.second_kernel)?;
    let v_model = LocalPolyModel::new(x.clone(), sq, 1, &[config.g], config.second_kernel)?;
    let rl = config.first_kernel.constants().roughness.powi(x.dim() as i32);
    let hs = vec![config.g; x.dim()];
    Ok(fit
        .grid_x
        .rows()
        .map(|p| {
            let s = s_model.fit_at(p).map(|f| f.alpha).unwrap_or(f64::NAN);
            let v = v_model.fit_at(p).map(|f| f.alpha).unwrap_or(f64::NAN);
            let f = kde(x, p, &hs, config.second_kernel);
            if s > 0.0 && f > 0.0 && v >= 0.0 {
                v * rl / (f * s * s)
            } else {
                f64::NAN
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn closed_forms_are_consistent() {
        let d = censored_a();
        let mut rng = SimRng::seed_from_u64(5);
        let s = d.sample(200_000, &mut rng);
        let cens = s.y.iter().filter(|v| **v == 0.0).count() as f64 / s.y.len() as f64;
        let expected = 1.0 - quad(|x| d.s0(&[x]));
        assert!((cens - expected).abs() < 0.005, "{cens} vs {expected}");
        assert!((expected - 0.288).abs() < 0.01);
        let mean_y = s.y.iter().sum::<f64>() / s.y.len() as f64;
        assert!((mean_y - quad(|x| d.r0(&[x]))).abs() < 0.01);
    }

    fn quad(f: impl Fn(f64) -> f64) -> f64 {
        crate::quadrature::integrate(f, 0.0, 1.0, 1e-10)
    }

    #[test]
    fn rejects_fully_censored() {
        let x = Points::from_column(vec![0.1, 0.2, 0.3]);
        let cfg = CensoredConfig::new(1, 0.5, 0.5);
        assert!(matches!(
            fit_censored(&x, &[0.0; 3], &x, &cfg),
            Err(Error::DegenerateCensoring(_))
        ));
    }

    #[test]
    fn heavy_censoring_is_reported() {
        let mut d = censored_a();
        d.mu0 = Arc::new(|_: &[f64]| -40.0);
        assert!(matches!(
            censored_avar(&d, &[0.5], KernelSpec::Triweight),
            Err(Error::HeavyCensoring { .. })
        ));
    }
}
