//! Fully specified data-generating processes for the two-stage model
//! `T = r0(S) + zeta`, `Y = m0(r0(S)) + rho(S) + eps*`.
//!
//! Quantities conditional on the index `R = r0(S) = x` are computed by
//! integrating over the level set `{s : s_p = phi(s_{-p}, x)}`, using that
//! `r0` is strictly monotone in its last argument.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::points::{Dataset, Points};
use crate::quadrature;

pub type SimRng = ChaCha8Rng;
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `(s_{-p}, x) -> s_p` with `r0(s_{-p}, s_p) = x`.
pub type InverseFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut SimRng, &mut [f64]) + Send + Sync>;

/// Central-difference step for derivatives that are not supplied.
pub const DIFF_STEP: f64 = 1e-5;
const LEVEL_SET_TOL: f64 = 1e-10;

pub(crate) fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + DIFF_STEP) - f(x - DIFF_STEP)) / (2.0 * DIFF_STEP)
}

pub(crate) fn central_diff2(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    // A wider step keeps cancellation error near 1e-6 for second differences.
    let e = 1e-4;
    (f(x + e) - 2.0 * f(x) + f(x - e)) / (e * e)
}

/// Law of the covariate vector S on a box support.
#[derive(Clone)]
pub struct CovariateLaw {
    pub support: Vec<(f64, f64)>,
    pub density: PointFn,
    /// Optional derivative of the density in the last coordinate.
    pub density_dp: Option<PointFn>,
    pub sampler: SamplerFn,
}

impl CovariateLaw {
    /// Independent uniform coordinates on the given box.
    pub fn uniform(support: Vec<(f64, f64)>) -> Self {
        let volume: f64 = support.iter().map(|(a, b)| b - a).product();
        let sup = support.clone();
        let sup2 = support.clone();
        CovariateLaw {
            support,
            density: Arc::new(move |s: &[f64]| {
                if s.iter().zip(&sup).all(|(v, (a, b))| *v >= *a && *v <= *b) {
                    1.0 / volume
                } else {
                    0.0
                }
            }),
            density_dp: Some(Arc::new(|_: &[f64]| 0.0)),
            sampler: Arc::new(move |rng: &mut SimRng, out: &mut [f64]| {
                for (o, (a, b)) in out.iter_mut().zip(&sup2) {
                    *o = a + (b - a) * rng.random::<f64>();
                }
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(&self.support)
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Centered Gaussian noise with a covariate-dependent standard deviation.
#[derive(Clone)]
pub struct NoiseLaw {
    pub sd: PointFn,
    constant: Option<f64>,
}

impl NoiseLaw {
    pub fn gaussian(sd: f64) -> Self {
        NoiseLaw {
            sd: Arc::new(move |_: &[f64]| sd),
            constant: Some(sd),
        }
    }

    pub fn heteroskedastic(sd: PointFn) -> Self {
        NoiseLaw { sd, constant: None }
    }

    pub fn zero() -> Self {
        NoiseLaw::gaussian(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Some(0.0)
    }

    pub fn variance_at(&self, s: &[f64]) -> f64 {
        let v = (self.sd)(s);
        v * v
    }
}

/// Data-generating process of the generated-covariate model with `d = 1`.
#[derive(Clone)]
pub struct DgpSpec {
    pub name: String,
    pub covariates: CovariateLaw,
    pub r0: PointFn,
    /// Derivatives of `r0` in its last argument.
    pub r0_dp: Option<PointFn>,
    pub r0_dpp: Option<PointFn>,
    pub phi: InverseFn,
    pub m0: ScalarFn,
    pub m0_d1: Option<ScalarFn>,
    pub m0_d2: Option<ScalarFn>,
    /// `None` means `rho` is identically zero.
    pub rho: Option<PointFn>,
    pub rho_dp: Option<PointFn>,
    pub eps: NoiseLaw,
    pub zeta: NoiseLaw,
    /// Correlation between `eps*` and `zeta` given S.
    pub noise_corr: f64,
}

impl fmt::Debug for DgpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DgpSpec")
            .field("name", &self.name)
            .field("p", &self.p())
            .field("support", &self.covariates.support)
            .field("has_rho", &self.rho.is_some())
            .finish()
    }
}

impl DgpSpec {
    pub fn new(
        name: impl Into<String>,
        covariates: CovariateLaw,
        r0: PointFn,
        phi: InverseFn,
        m0: ScalarFn,
    ) -> Self {
        DgpSpec {
            name: name.into(),
            covariates,
            r0,
            r0_dp: None,
            r0_dpp: None,
            phi,
            m0,
            m0_d1: None,
            m0_d2: None,
            rho: None,
            rho_dp: None,
            eps: NoiseLaw::zero(),
            zeta: NoiseLaw::zero(),
            noise_corr: 0.0,
        }
    }

    pub fn with_r0_derivatives(mut self, dp: PointFn, dpp: PointFn) -> Self {
        self.r0_dp = Some(dp);
        self.r0_dpp = Some(dpp);
        self
    }

    pub fn with_m0_derivatives(mut self, d1: ScalarFn, d2: ScalarFn) -> Self {
        self.m0_d1 = Some(d1);
        self.m0_d2 = Some(d2);
        self
    }

    pub fn with_rho(mut self, rho: PointFn, rho_dp: Option<PointFn>) -> Self {
        self.rho = Some(rho);
        self.rho_dp = rho_dp;
        self
    }

    pub fn with_noise(mut self, eps: NoiseLaw, zeta: NoiseLaw, corr: f64) -> Self {
        self.eps = eps;
        self.zeta = zeta;
        self.noise_corr = corr;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn p(&self) -> usize {
        self.covariates.dim()
    }

    pub fn r0(&self, s: &[f64]) -> f64 {
        (self.r0)(s)
    }

    /// `d r0 / d s_p`.
    pub fn r0_dp(&self, s: &[f64]) -> f64 {
        match &self.r0_dp {
            Some(f) => f(s),
            None => last_coord_diff(&*self.r0, s),
        }
    }

    /// `d^2 r0 / d s_p^2`.
    pub fn r0_dpp(&self, s: &[f64]) -> f64 {
        match &self.r0_dpp {
            Some(f) => f(s),
            None => {
                let p = s.len();
                let mut v = s.to_vec();
                central_diff2(
                    |t| {
                        v[p - 1] = t;
                        (self.r0)(&v)
                    },
                    s[p - 1],
                )
            }
        }
    }

    pub fn phi(&self, s_minus: &[f64], x: f64) -> f64 {
        (self.phi)(s_minus, x)
    }

    /// Point on the level set `r0 = x` above `s_minus`.
    pub fn level_point(&self, s_minus: &[f64], x: f64) -> Vec<f64> {
        let mut s = s_minus.to_vec();
        s.push(self.phi(s_minus, x));
        s
    }

    /// `d phi / d x = 1 / (d r0 / d s_p)` on the level set.
    pub fn phi_dx(&self, s_minus: &[f64], x: f64) -> f64 {
        1.0 / self.r0_dp(&self.level_point(s_minus, x))
    }

    /// Gradient of `phi` in `s_{-p}` by implicit differentiation.
    pub fn phi_dminus(&self, s_minus: &[f64], x: f64) -> Vec<f64> {
        let s = self.level_point(s_minus, x);
        let dp = self.r0_dp(&s);
        (0..s_minus.len())
            .map(|k| {
                let mut v = s.clone();
                let dk = central_diff(
                    |t| {
                        v[k] = t;
                        (self.r0)(&v)
                    },
                    s[k],
                );
                -dk / dp
            })
            .collect()
    }

    pub fn m0(&self, x: f64) -> f64 {
        (self.m0)(x)
    }

    pub fn m0_d1(&self, x: f64) -> f64 {
        match &self.m0_d1 {
            Some(f) => f(x),
            None => central_diff(&*self.m0, x),
        }
    }

    pub fn m0_d2(&self, x: f64) -> f64 {
        match &self.m0_d2 {
            Some(f) => f(x),
            None => central_diff2(&*self.m0, x),
        }
    }

    pub fn has_rho(&self) -> bool {
        self.rho.is_some()
    }

    pub fn rho(&self, s: &[f64]) -> f64 {
        self.rho.as_ref().map_or(0.0, |f| f(s))
    }

    /// `d (rho f_S) / d s_p`.
    pub fn rho_fs_dp(&self, s: &[f64]) -> f64 {
        let Some(rho) = &self.rho else { return 0.0 };
        match (&self.rho_dp, &self.covariates.density_dp) {
            (Some(rd), Some(fd)) => rd(s) * self.f_s(s) + rho(s) * fd(s),
            _ => last_coord_diff(&|v: &[f64]| rho(v) * (self.covariates.density)(v), s),
        }
    }

    pub fn f_s(&self, s: &[f64]) -> f64 {
        (self.covariates.density)(s)
    }

    /// Integral of `w(s) f_S(s) / |d r0/d s_p|` over the level set `r0 = x`.
    fn level_set_integral(&self, x: f64, w: &dyn Fn(&[f64]) -> f64) -> f64 {
        let p = self.p();
        let integrand = |s_minus: &[f64]| {
            let s = self.level_point(s_minus, x);
            if !self.covariates.contains(&s) {
                return 0.0;
            }
            let f = self.f_s(&s);
            if f == 0.0 {
                return 0.0;
            }
            w(&s) * f / self.r0_dp(&s).abs()
        };
        if p == 1 {
            integrand(&[])
        } else {
            quadrature::integrate_box(integrand, &self.covariates.support[..p - 1], LEVEL_SET_TOL)
        }
    }

    /// Density of the index `R = r0(S)`.
    pub fn f_r(&self, x: f64) -> f64 {
        self.level_set_integral(x, &|_| 1.0)
    }

    /// `E[w(S) | R = x]`.
    pub fn cond_mean(&self, x: f64, w: &dyn Fn(&[f64]) -> f64) -> Result<f64> {
        let f = self.f_r(x);
        if !(f >= 1e-8) {
            return Err(Error::NearBoundary { x, density: f });
        }
        Ok(self.level_set_integral(x, w) / f)
    }

    /// `Var(eps | R = x)` with `eps = eps* + rho(S)`.
    pub fn var_eps_given_r(&self, x: f64) -> Result<f64> {
        self.cond_mean(x, &|s| self.eps.variance_at(s) + self.rho(s).powi(2))
    }

    pub fn var_zeta_given_r(&self, x: f64) -> Result<f64> {
        self.cond_mean(x, &|s| self.zeta.variance_at(s))
    }

    /// `E(eps zeta | R = x)`.
    pub fn cov_eps_zeta_given_r(&self, x: f64) -> Result<f64> {
        if self.noise_corr == 0.0 {
            return Ok(0.0);
        }
        self.cond_mean(x, &|s| self.noise_corr * (self.eps.sd)(s) * (self.zeta.sd)(s))
    }

    /// Range of the index over the covariate support.
    pub fn index_range(&self) -> (f64, f64) {
        let p = self.p();
        let per_dim: usize = if p == 1 { 2001 } else { 101 };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut s = vec![0.0; p];
        let total = per_dim.pow(p as u32);
        for k in 0..total {
            let mut rem = k;
            for (j, (a, b)) in self.covariates.support.iter().enumerate() {
                let i = rem % per_dim;
                rem /= per_dim;
                s[j] = a + (b - a) * i as f64 / (per_dim - 1) as f64;
            }
            let r = (self.r0)(&s);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }

    /// Draws `n` observations. Per observation the stream order is S, then
    /// two standard normals for (zeta, eps*).
    pub fn sample(&self, n: usize, rng: &mut SimRng) -> Dataset {
        let p = self.p();
        let mut s = vec![0.0; n * p];
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let c = self.noise_corr;
        let c_perp = (1.0 - c * c).max(0.0).sqrt();
        for i in 0..n {
            let row = &mut s[i * p..(i + 1) * p];
            (self.covariates.sampler)(rng, row);
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let r = (self.r0)(row);
            let zeta = (self.zeta.sd)(row) * z1;
            let eps = (self.eps.sd)(row) * (c * z1 + c_perp * z2);
            t.push(r + zeta);
            y.push(self.m0(r) + self.rho(row) + eps);
        }
        Dataset {
            s: Points::new(p, s).expect("p >= 1"),
            t: Some(Points::from_column(t)),
            y,
        }
    }

    /// Same as [`DgpSpec::sample`] with a fresh stream seeded by `seed`.
    pub fn generate(&self, n: usize, seed: u64) -> Dataset {
        self.sample(n, &mut SimRng::seed_from_u64(seed))
    }

    /// True index values `r0(S_i)`.
    pub fn true_index(&self, s: &Points) -> Points {
        Points::from_column(s.rows().map(|r| (self.r0)(r)).collect())
    }

    /// Checks monotonicity of `r0` in its last argument, the inverse
    /// identity `r0(s_{-p}, phi(s_{-p}, x)) = x` and positivity of the
    /// covariate density on a grid over the support.
    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        let per_dim: usize = if p == 1 { 1001 } else { 41 };
        let mut s = vec![0.0; p];
        let mut sign = 0.0;
        for k in 0..per_dim.pow(p as u32) {
            let mut rem = k;
            for (j, (a, b)) in self.covariates.support.iter().enumerate() {
                let i = rem % per_dim;
                rem /= per_dim;
                s[j] = a + (b - a) * i as f64 / (per_dim - 1) as f64;
            }
            let d = self.r0_dp(&s);
            if d.abs() < 1e-10 || (sign != 0.0 && d.signum() != sign) {
                return Err(Error::DegenerateMonotonicity {
                    point: s.clone(),
                    value: d,
                });
            }
            sign = d.signum();
            let x = (self.r0)(&s);
            let back = self.phi(&s[..p - 1], x);
            if (back - s[p - 1]).abs() > 1e-8 {
                return Err(Error::param(format!(
                    "dgp {}: inverse of r0 in its last argument is inconsistent at {:?} ({} vs {})",
                    self.name,
                    s,
                    back,
                    s[p - 1]
                )));
            }
            let f = self.f_s(&s);
            if !(f > 1e-8) {
                return Err(Error::param(format!(
                    "dgp {}: covariate density {} is not bounded away from zero at {:?}",
                    self.name, f, s
                )));
            }
        }
        Ok(())
    }
}

fn last_coord_diff(f: &dyn Fn(&[f64]) -> f64, s: &[f64]) -> f64 {
    let p = s.len();
    let mut v = s.to_vec();
    central_diff(
        |t| {
            v[p - 1] = t;
            f(&v)
        },
        s[p - 1],
    )
}

/// Solves `f(t) = x` for increasing `f` by safeguarded Newton iteration on
/// a bracket.
pub fn invert_increasing(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    x: f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(t) - x;
        if v == 0.0 {
            return t;
        }
        if v > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let step = t - v / df(t);
        t = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if (hi - lo) < 1e-15 * (1.0 + t.abs()) || v.abs() < 1e-15 {
            break;
        }
    }
    t
}

/// Names of the built-in two-stage processes.
pub const REFERENCE_DGPS: [&str; 3] = ["dgp-a", "dgp-b", "dgp-c"];

/// Built-in process by name.
pub fn reference(name: &str) -> Result<DgpSpec> {
    match name {
        "dgp-a" => Ok(dgp_a()),
        "dgp-b" => Ok(dgp_b()),
        "dgp-c" => Ok(dgp_c()),
        other => Err(Error::param(format!(
            "unknown dgp '{other}'; expected one of {}",
            REFERENCE_DGPS.join(", ")
        ))),
    }
}

fn m0_fns() -> (ScalarFn, ScalarFn, ScalarFn) {
    (
        Arc::new(|x: f64| (2.0 * x).sin() + x * x),
        Arc::new(|x: f64| 2.0 * (2.0 * x).cos() + 2.0 * x),
        Arc::new(|x: f64| -4.0 * (2.0 * x).sin() + 2.0),
    )
}

/// One covariate on [0, 1], `r0(s) = s + 0.1 sin(2 pi s)`,
/// `m0(x) = sin(2x) + x^2`, `zeta ~ N(0, 0.3^2)`, `eps* ~ N(0, 0.5^2)`,
/// `rho = 0`.
pub fn dgp_a() -> DgpSpec {
    use std::f64::consts::PI;
    let r0 = |s: f64| s + 0.1 * (2.0 * PI * s).sin();
    let r0d = |s: f64| 1.0 + 0.2 * PI * (2.0 * PI * s).cos();
    let (m0, m1, m2) = m0_fns();
    DgpSpec::new(
        "dgp-a",
        CovariateLaw::uniform(vec![(0.0, 1.0)]),
        Arc::new(move |s: &[f64]| r0(s[0])),
        Arc::new(move |_: &[f64], x: f64| invert_increasing(r0, r0d, x, x - 0.11, x + 0.11)),
        m0,
    )
    .with_r0_derivatives(
        Arc::new(move |s: &[f64]| r0d(s[0])),
        Arc::new(|s: &[f64]| -0.4 * PI * PI * (2.0 * PI * s[0]).sin()),
    )
    .with_m0_derivatives(m1, m2)
    .with_noise(NoiseLaw::gaussian(0.5), NoiseLaw::gaussian(0.3), 0.0)
}

/// Two covariates uniform on the unit square with the index in the last
/// coordinate, `r0(S) = S_2`, and `rho(S) = 0.3 (2 S_1 - 1)(1 + S_2)`, which
/// has conditional mean zero given the index. Same `m0` and noise as
/// `dgp-a`.
pub fn dgp_b() -> DgpSpec {
    let (m0, m1, m2) = m0_fns();
    DgpSpec::new(
        "dgp-b",
        CovariateLaw::uniform(vec![(0.0, 1.0), (0.0, 1.0)]),
        Arc::new(|s: &[f64]| s[1]),
        Arc::new(|_: &[f64], x: f64| x),
        m0,
    )
    .with_r0_derivatives(Arc::new(|_: &[f64]| 1.0), Arc::new(|_: &[f64]| 0.0))
    .with_m0_derivatives(m1, m2)
    .with_rho(
        Arc::new(|s: &[f64]| 0.3 * (2.0 * s[0] - 1.0) * (1.0 + s[1])),
        Some(Arc::new(|s: &[f64]| 0.3 * (2.0 * s[0] - 1.0))),
    )
    .with_noise(NoiseLaw::gaussian(0.5), NoiseLaw::gaussian(0.3), 0.0)
}

/// `dgp-a` with a precise first stage: `zeta ~ N(0, 0.05^2)`.
pub fn dgp_c() -> DgpSpec {
    dgp_a()
        .named("dgp-c")
        .with_noise(NoiseLaw::gaussian(0.5), NoiseLaw::gaussian(0.05), 0.0)
}
