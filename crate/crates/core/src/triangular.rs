//! Triangular model with a control function:
//! `Y = mu1(X1, Z1) + eps`, `X1 = mu2(Z1, Z2) + V`, `E(eps | Z, V) = lambda(V)`.
//!
//! The first stage estimates `V_hat = X1 - mu2_hat(Z)`. The second stage fits
//! `m(x1, z1, v) = E(Y | X1, Z1, V)` by local linear regression on
//! `(X1, Z1, V_hat)` and integrates out `v` with the empirical law of
//! `V_hat`, so `mu1_hat(x1, z1) = (1/n) sum_i m_hat(x1, z1, V_hat_i)`
//! estimates `mu1` up to the constant `E lambda(V)`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, StandardNormal};
use rayon::prelude::*;

use crate::density::kde;
use crate::dgp::{CovariateLaw, PointFn, ScalarFn, SimRng};
use crate::error::{Error, Result};
use crate::generated::check_first_stage_kernel;
use crate::kernel::KernelSpec;
use crate::local_poly::LocalPolyModel;
use crate::points::Points;
use crate::quadrature;

/// Largest tolerated share of `V_hat_i` at which `m_hat` cannot be evaluated.
pub const MAX_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct TriangularConfig {
    /// Order of the local polynomial for `mu2_hat`.
    pub q: usize,
    /// Bandwidth of `mu2_hat`.
    pub g: f64,
    /// Common bandwidth of the second stage.
    pub h: f64,
    pub first_kernel: KernelSpec,
    pub second_kernel: KernelSpec,
}

impl TriangularConfig {
    pub fn new(q: usize, g: f64, h: f64) -> Self {
        TriangularConfig {
            q,
            g,
            h,
            first_kernel: KernelSpec::Triweight,
            second_kernel: KernelSpec::Triweight,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TriangularFit {
    /// Evaluation points `(x1, z1)`.
    pub grid: Points,
    pub mu1_hat: Vec<f64>,
    /// Share of control values dropped at each grid point.
    pub dropout: Vec<f64>,
    pub flags: Vec<Option<String>>,
    /// Control values used in the second stage.
    pub v: Vec<f64>,
    pub second_stage: LocalPolyModel,
}

impl TriangularFit {
    pub fn n_ok(&self) -> usize {
        self.flags.iter().filter(|f| f.is_none()).count()
    }
}

/// First stage: `V_hat_i = X1_i - mu2_hat(Z1_i, Z2_i)`.
pub fn control_residuals(x1: &[f64], z1: &Points, z2: &Points, config: &TriangularConfig) -> Result<Vec<f64>> {
    let n = x1.len();
    if z1.len() != n || z2.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: if z1.len() != n { z1.len() } else { z2.len() },
        });
    }
    let d1 = z1.dim();
    let d2 = z2.dim();
    let mut z = Vec::with_capacity(n * (d1 + d2));
    for i in 0..n {
        z.extend_from_slice(z1.row(i));
        z.extend_from_slice(z2.row(i));
    }
    let z = Points::new(d1 + d2, z)?;
    check_first_stage_kernel(config.first_kernel, d1 + d2)?;
    let model = LocalPolyModel::new(z, x1.to_vec(), config.q, &[config.g], config.first_kernel)?;
    let fitted = model.fitted_at_training()?;
    let v: Vec<f64> = x1.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let scale = sd(x1).max(1.0);
    if !(sd(&v) > 1e-8 * scale) {
        return Err(Error::DegenerateSupport(
            "first-stage residuals are constant; X1 is a deterministic function of the instruments".into(),
        ));
    }
    Ok(v)
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Two-step estimator with generated controls.
pub fn fit_triangular(
    y: &[f64],
    x1: &[f64],
    z1: &Points,
    z2: &Points,
    grid: &Points,
    config: &TriangularConfig,
) -> Result<TriangularFit> {
    let v = control_residuals(x1, z1, z2, config)?;
    fit_with_controls(y, x1, z1, &v, grid, config)
}

/// Second stage and averaging for given controls. The excluded instruments
/// never enter here; passing the true `V` gives the oracle estimator.
pub fn fit_with_controls(
    y: &[f64],
    x1: &[f64],
    z1: &Points,
    v: &[f64],
    grid: &Points,
    config: &TriangularConfig,
) -> Result<TriangularFit> {
    let n = y.len();
    if x1.len() != n || z1.len() != n || v.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: [x1.len(), z1.len(), v.len()].into_iter().find(|l| *l != n).unwrap_or(n),
        });
    }
    let d1 = z1.dim();
    if grid.dim() != 1 + d1 {
        return Err(Error::Dimension {
            expected: 1 + d1,
            got: grid.dim(),
        });
    }
    if grid.is_empty() {
        return Err(Error::param("evaluation grid is empty"));
    }
    let dim = 2 + d1;
    let mut r = Vec::with_capacity(n * dim);
    for i in 0..n {
        r.push(x1[i]);
        r.extend_from_slice(z1.row(i));
        r.push(v[i]);
    }
    let model = LocalPolyModel::new(Points::new(dim, r)?, y.to_vec(), 1, &[config.h], config.second_kernel)?;

    let mut mu1_hat = Vec::with_capacity(grid.len());
    let mut dropout = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    for point in grid.rows() {
        let values: Vec<Option<f64>> = v
            .par_iter()
            .map(|vi| {
                let mut at = point.to_vec();
                at.push(*vi);
                model.fit_at(&at).ok().map(|f| f.alpha)
            })
            .collect();
        let ok: Vec<f64> = values.into_iter().flatten().collect();
        let fraction = 1.0 - ok.len() as f64 / n as f64;
        dropout.push(fraction);
        if fraction > MAX_DROPOUT || ok.is_empty() {
            mu1_hat.push(f64::NAN);
            flags.push(Some(
                Error::DropoutExceeded {
                    point: point.to_vec(),
                    fraction,
                }
                .to_string(),
            ));
        } else {
            mu1_hat.push(ok.iter().sum::<f64>() / ok.len() as f64);
            flags.push(None);
        }
    }
    Ok(TriangularFit {
        grid: grid.clone(),
        mu1_hat,
        dropout,
        flags,
        v: v.to_vec(),
        second_stage: model,
    })
}

pub type StructuralFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type ConditionalDensityFn = Arc<dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync>;
pub type ControlSampler = Arc<dyn Fn(&mut SimRng) -> f64 + Send + Sync>;

/// Simulation design for the triangular model with homoskedastic noise
/// `eps = lambda(V) + eps_star`, `eps_star ~ N(0, eps_sd^2)`.
#[derive(Clone)]
pub struct TriangularDgp {
    pub name: String,
    /// Dimension of the included instruments `Z1`.
    pub d1: usize,
    /// Law of `(Z1, Z2)`.
    pub instruments: CovariateLaw,
    /// `mu2(z1, z2)`.
    pub mu2: PointFn,
    pub v_support: (f64, f64),
    pub v_density: ScalarFn,
    pub v_sampler: ControlSampler,
    /// `mu1(x1, z1)`.
    pub mu1: StructuralFn,
    /// Control function `lambda(v)`.
    pub control: ScalarFn,
    pub eps_sd: f64,
    /// Conditional density of `(X1, Z1)` given `V = v`.
    pub f_xz_given_v: ConditionalDensityFn,
}

impl std::fmt::Debug for TriangularDgp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TriangularDgp")
            .field("name", &self.name)
            .field("d1", &self.d1)
            .field("eps_sd", &self.eps_sd)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSample {
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub z1: Points,
    pub z2: Points,
    /// True controls, for the oracle estimator.
    pub v: Vec<f64>,
}

impl TriangularDgp {
    pub fn d2(&self) -> usize {
        self.instruments.dim() - self.d1
    }

    pub fn mu1(&self, x1: f64, z1: &[f64]) -> f64 {
        (self.mu1)(x1, z1)
    }

    /// `E lambda(V)`, the constant separating `mu1` from its estimand.
    pub fn control_mean(&self) -> f64 {
        let (a, b) = self.v_support;
        quadrature::integrate(|v| (self.control)(v) * (self.v_density)(v), a, b, 1e-12)
    }

    /// Estimand of `mu1_hat`: `mu1(x1, z1) + E lambda(V)`.
    pub fn target(&self, x1: f64, z1: &[f64]) -> f64 {
        self.mu1(x1, z1) + self.control_mean()
    }

    pub fn sample(&self, n: usize, rng: &mut SimRng) -> TriangularSample {
        let p = self.instruments.dim();
        let d1 = self.d1;
        let mut z = vec![0.0; p];
        let mut out = TriangularSample {
            y: Vec::with_capacity(n),
            x1: Vec::with_capacity(n),
            z1: Points::new(d1, Vec::with_capacity(n * d1)).expect("d1 >= 1"),
            z2: Points::new(p - d1, Vec::with_capacity(n * (p - d1))).expect("d2 >= 1"),
            v: Vec::with_capacity(n),
        };
        let mut z1 = Vec::with_capacity(n * d1);
        let mut z2 = Vec::with_capacity(n * (p - d1));
        for _ in 0..n {
            (self.instruments.sampler)(rng, &mut z);
            let v = (self.v_sampler)(rng);
            let e: f64 = rng.sample(StandardNormal);
            let x1 = (self.mu2)(&z) + v;
            let y = self.mu1(x1, &z[..d1]) + (self.control)(v) + self.eps_sd * e;
            out.y.push(y);
            out.x1.push(x1);
            out.v.push(v);
            z1.extend_from_slice(&z[..d1]);
            z2.extend_from_slice(&z[d1..]);
        }
        out.z1 = Points::new(d1, z1).expect("d1 >= 1");
        out.z2 = Points::new(p - d1, z2).expect("d2 >= 1");
        out
    }
}

/// Reference design: `Z1, Z2 ~ U[0, 1]`, `V = B - 1/2` with
/// `B ~ Beta(2, 2)`, `X1 = Z1 + 4 Z2 + V`, `mu1(x1, z1) = x1 / 2 + sin(pi z1)`,
/// `lambda(v) = 0.8 v` and `eps_sd = 0.3`.
pub fn triangular_a() -> TriangularDgp {
    let beta = Beta::new(2.0, 2.0).expect("valid beta parameters");
    TriangularDgp {
        name: "triangular-a".into(),
        d1: 1,
        instruments: CovariateLaw::uniform(vec![(0.0, 1.0), (0.0, 1.0)]),
        mu2: Arc::new(|z: &[f64]| z[0] + 4.0 * z[1]),
        v_support: (-0.5, 0.5),
        v_density: Arc::new(|v: f64| {
            if v.abs() <= 0.5 {
                6.0 * (v + 0.5) * (0.5 - v)
            } else {
                0.0
            }
        }),
        v_sampler: Arc::new(move |rng: &mut SimRng| rng.sample(beta) - 0.5),
        mu1: Arc::new(|x1: f64, z1: &[f64]| 0.5 * x1 + (std::f64::consts::PI * z1[0]).sin()),
        control: Arc::new(|v: f64| 0.8 * v),
        eps_sd: 0.3,
        f_xz_given_v: Arc::new(|x1: f64, z1: &[f64], v: f64| {
            let t = x1 - z1[0] - v;
            if (0.0..=1.0).contains(&z1[0]) && (0.0..=4.0).contains(&t) {
                0.25
            } else {
                0.0
            }
        }),
    }
}

/// Asymptotic variance of `sqrt(n h^{1+d1})(mu1_hat - mu1)` at `(x1, z1)`:
/// `E[sigma^2 / f_{XZ|V}(x1, z1, V)] R(K)^{1+d1}`.
pub fn triangular_avar(dgp: &TriangularDgp, x1: f64, z1: &[f64], second_kernel: KernelSpec) -> Result<f64> {
    let (a, b) = dgp.v_support;
    let checks = 1001;
    for k in 0..checks {
        let v = a + (b - a) * (k as f64 + 0.5) / checks as f64;
        if (dgp.v_density)(v) > 1e-12 && (dgp.f_xz_given_v)(x1, z1, v) < 1e-8 {
            return Err(Error::SupportCondition(format!(
                "conditional density of (x1, z1) = ({x1}, {z1:?}) given V = {v} is below 1e-8"
            )));
        }
    }
    let s2 = dgp.eps_sd * dgp.eps_sd;
    let e = quadrature::integrate(
        |v| {
            let fv = (dgp.v_density)(v);
            if fv > 0.0 {
                fv * s2 / (dgp.f_xz_given_v)(x1, z1, v)
            } else {
                0.0
            }
        },
        a,
        b,
        1e-10,
    );
    Ok(e * second_kernel.constants().roughness.powi(1 + z1.len() as i32))
}

/// Plug-in version of [`triangular_avar`] with a homoskedastic residual
/// variance and kernel estimates of the conditional density, averaged over
/// the controls of the fit.
pub fn triangular_avar_plugin(fit: &TriangularFit, y: &[f64], config: &TriangularConfig) -> Result<Vec<f64>> {
    let r = fit.second_stage.covariates();
    let residuals: Vec<f64> = fit
        .second_stage
        .fit_grid(r)
        .into_iter()
        .zip(y)
        .filter_map(|(f, yi)| f.ok().map(|f| (yi - f.alpha).powi(2)))
        .collect();
    if residuals.is_empty() {
        return Err(Error::SupportCondition("no second-stage residual could be evaluated".into()));
    }
    let s2 = residuals.iter().sum::<f64>() / residuals.len() as f64;
    let n = y.len() as f64;
    let dim = r.dim();
    let vs = Points::from_column(fit.v.clone());
    let hs = vec![config.h; dim];
    let rk = config.second_kernel.constants().roughness.powi(dim as i32 - 1);
    Ok(fit
        .grid
        .rows()
        .map(|p| {
            let total: f64 = fit
                .v
                .par_iter()
                .map(|v| {
                    let mut at = p.to_vec();
                    at.push(*v);
                    let joint = kde(r, &at, &hs, config.second_kernel);
                    let marginal = kde(&vs, &[*v], &[config.h], config.second_kernel);
                    if joint > 0.0 {
                        marginal / joint
                    } else {
                        f64::INFINITY
                    }
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            s2 * total / n * rk
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn reference_avar_closed_form() {
        let d = triangular_a();
        let a = triangular_avar(&d, 2.5, &[0.5], KernelSpec::Triweight).unwrap();
        let rk = 350.0 / 429.0;
        assert!((a - 4.0 * 0.09 * rk * rk).abs() < 1e-8, "{a}");
        assert!(d.control_mean().abs() < 1e-12);
    }

    #[test]
    fn support_failure() {
        let d = triangular_a();
        assert!(matches!(
            triangular_avar(&d, 0.1, &[0.5], KernelSpec::Triweight),
            Err(Error::SupportCondition(_))
        ));
    }

    #[test]
    fn sample_shapes() {
        let d = triangular_a();
        let mut rng = SimRng::seed_from_u64(1);
        let s = d.sample(500, &mut rng);
        assert_eq!(s.z1.len(), 500);
        assert_eq!(s.z2.dim(), 1);
        assert!(s.v.iter().all(|v| v.abs() <= 0.5));
        for i in 0..500 {
            let back = s.x1[i] - s.z1.row(i)[0] - 4.0 * s.z2.row(i)[0];
            assert!((back - s.v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_controls_are_degenerate() {
        let z1 = Points::from_column((0..50).map(|i| i as f64 / 50.0).collect());
        let z2 = Points::from_column((0..50).map(|i| ((i * 7) % 50) as f64 / 50.0).collect());
        let x1: Vec<f64> = (0..50).map(|i| z1.row(i)[0] + z2.row(i)[0]).collect();
        let cfg = TriangularConfig::new(1, 2.0, 0.5);
        assert!(matches!(
            control_residuals(&x1, &z1, &z2, &cfg),
            Err(Error::DegenerateSupport(_))
        ));
    }
}
