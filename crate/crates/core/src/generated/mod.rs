//! Two-stage regression on a nonparametrically generated covariate.
//!
//! The first stage fits `r_hat` by local polynomial regression of `T` on
//! `S`; the second stage is a local linear regression of `Y` on
//! `R_hat_i = r_hat(S_i)`. The oracle estimator replaces `R_hat_i` by the
//! true index `r0(S_i)`. The correction terms `Delta` and `Gamma` describe,
//! to first order, how far the real estimator moves away from the oracle:
//! `m_hat - m_oracle ~ -m0' Delta + Gamma`.

mod theory;

pub use theory::{
    avar_cor, bias_cor2, gamma_leading_kernel, h_delta_kernel, h_tilde_gamma, j_tilde,
    prop1_kernel, rate_kappa, ComplexityParams, KappaBounds,
};

use std::sync::Arc;

use crate::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::local_poly::LocalPolyModel;
use crate::points::{Dataset, Points};
use crate::quadrature;

/// Number of points of the default evaluation grid.
pub const DEFAULT_GRID_SIZE: usize = 41;
const MIN_INDEX_DENSITY: f64 = 1e-8;
const POPULATION_TOL: f64 = 1e-9;

/// Checks the first-stage kernel smoothness requirement
/// `smoothness >= max(2, p/2)`. For `p > 4` the requirement is left to the
/// caller and only logged.
pub fn check_first_stage_kernel(kernel: KernelSpec, p: usize) -> Result<()> {
    let needed = 2usize.max(p.div_ceil(2));
    if kernel.smoothness_order() >= needed {
        return Ok(());
    }
    if p > 4 {
        log::warn!(
            "first-stage kernel {kernel} is {}-times differentiable; p = {p} asks for {needed}",
            kernel.smoothness_order()
        );
        return Ok(());
    }
    Err(Error::param(format!(
        "first-stage kernel {kernel} is only {}-times continuously differentiable; \
         a first stage in {p} dimensions needs at least {needed}",
        kernel.smoothness_order()
    )))
}

#[derive(Debug, Clone)]
pub struct TwoStageConfig {
    /// Order `q` of the first-stage local polynomial.
    pub first_order: usize,
    pub first_kernel: KernelSpec,
    pub second_kernel: KernelSpec,
    /// Second-stage bandwidths, one per generated covariate.
    pub h: Vec<f64>,
    /// First-stage bandwidth shared across covariate dimensions.
    pub g: f64,
    /// Evaluation grid; defaults to equispaced points over the trimmed
    /// range of the index.
    pub grid: Option<Points>,
    /// Fraction of the index range trimmed on each side for the default grid.
    pub interior_trim: f64,
    /// Ridge added to the first-stage Gram matrices.
    pub first_ridge: f64,
}

impl TwoStageConfig {
    pub fn new(first_order: usize, h: f64, g: f64) -> Self {
        TwoStageConfig {
            first_order,
            first_kernel: KernelSpec::Triweight,
            second_kernel: KernelSpec::Triweight,
            h: vec![h],
            g,
            grid: None,
            interior_trim: 0.0,
            first_ridge: 0.0,
        }
    }

    pub fn with_grid(mut self, grid: Points) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn with_trim(mut self, trim: f64) -> Self {
        self.interior_trim = trim;
        self
    }

    fn validate(&self, p: usize, d: usize) -> Result<()> {
        if self.h.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.h.len(),
            });
        }
        if let Some(b) = self
            .h
            .iter()
            .chain(std::iter::once(&self.g))
            .find(|b| !(**b > 0.0 && b.is_finite()))
        {
            return Err(Error::param(format!("bandwidths must be positive, got {b}")));
        }
        if !(0.0..0.5).contains(&self.interior_trim) {
            return Err(Error::param(format!(
                "interior trim must lie in [0, 0.5), got {}",
                self.interior_trim
            )));
        }
        check_first_stage_kernel(self.first_kernel, p)?;
        if let Some(grid) = &self.grid {
            if grid.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: grid.dim(),
                });
            }
            if grid.is_empty() {
                return Err(Error::param("evaluation grid is empty"));
            }
        }
        Ok(())
    }
}

/// Equispaced grid over `[lo + trim (hi - lo), hi - trim (hi - lo)]`.
pub fn default_grid(lo: f64, hi: f64, trim: f64, size: usize) -> Points {
    let range = hi - lo;
    let a = lo + trim * range;
    let b = hi - trim * range;
    if size == 1 {
        return Points::from_column(vec![0.5 * (a + b)]);
    }
    Points::from_column(
        (0..size)
            .map(|i| a + (b - a) * i as f64 / (size - 1) as f64)
            .collect(),
    )
}

/// Two-stage fit on a grid. For the oracle estimator `first_stage` is empty
/// and `index` holds the true index values.
#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub grid: Points,
    pub m_hat: Vec<f64>,
    pub m_oracle: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    /// Observations with positive second-stage kernel weight per grid point.
    pub eff_n: Vec<usize>,
    /// Failure reason per grid point; `m_hat` is NaN where set.
    pub flags: Vec<Option<String>>,
    /// Second-stage regressors: generated (real fit) or true (oracle fit).
    pub index: Points,
    pub covariates: Points,
    /// One first-stage model per generated covariate.
    pub first_stage: Arc<Vec<LocalPolyModel>>,
    pub h: Vec<f64>,
    pub second_kernel: KernelSpec,
}

impl TwoStageFit {
    /// Number of grid points with a finite estimate.
    pub fn n_ok(&self) -> usize {
        self.flags.iter().filter(|f| f.is_none()).count()
    }

    /// Attaches oracle values computed on the same grid.
    pub fn attach_oracle(&mut self, oracle: &TwoStageFit) -> Result<()> {
        check_same_grid(&self.grid, &oracle.grid)?;
        if self.h != oracle.h || self.second_kernel != oracle.second_kernel {
            return Err(Error::param(
                "real and oracle fits must share the second-stage bandwidth and kernel",
            ));
        }
        self.m_oracle = Some(oracle.m_hat.clone());
        Ok(())
    }

    /// First-stage errors `r_hat(S_i) - r0(S_i)` for `d = 1`.
    fn first_stage_errors(&self, dgp: &DgpSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.first_stage.is_empty() {
            return Err(Error::param("corrections need a fit with a first stage"));
        }
        if self.index.dim() != 1 {
            return Err(Error::param(
                "correction terms are implemented for one generated covariate",
            ));
        }
        let truth: Vec<f64> = self.covariates.rows().map(|s| dgp.r0(s)).collect();
        let err = self
            .index
            .as_slice()
            .iter()
            .zip(&truth)
            .map(|(a, b)| a - b)
            .collect();
        Ok((truth, err))
    }
}

fn check_same_grid(a: &Points, b: &Points) -> Result<()> {
    if a.dim() != b.dim() || a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "{} points in {} dimensions vs {} points in {} dimensions",
            a.len(),
            a.dim(),
            b.len(),
            b.dim()
        )));
    }
    if let Some(i) = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .position(|(x, y)| x != y)
    {
        return Err(Error::GridMismatch(format!(
            "grids differ at coordinate {i}"
        )));
    }
    Ok(())
}

fn second_stage(
    index: Points,
    covariates: Points,
    y: &[f64],
    config: &TwoStageConfig,
    first_stage: Arc<Vec<LocalPolyModel>>,
) -> Result<TwoStageFit> {
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => {
            if index.dim() != 1 {
                return Err(Error::param(
                    "a default grid is only available for one generated covariate",
                ));
            }
            let (lo, hi) = index.bounds()[0];
            default_grid(lo, hi, config.interior_trim, DEFAULT_GRID_SIZE)
        }
    };
    let model = LocalPolyModel::new(index.clone(), y.to_vec(), 1, &config.h, config.second_kernel)?;
    let fits = model.fit_grid(&grid);
    let mut m_hat = Vec::with_capacity(fits.len());
    let mut eff_n = Vec::with_capacity(fits.len());
    let mut flags = Vec::with_capacity(fits.len());
    for f in fits {
        match f {
            Ok(fit) => {
                m_hat.push(fit.alpha);
                eff_n.push(fit.effective_n);
                flags.push(None);
            }
            Err(e) => {
                let n = match &e {
                    Error::SingularWindow { effective_n, .. } => *effective_n,
                    _ => 0,
                };
                m_hat.push(f64::NAN);
                eff_n.push(n);
                flags.push(Some(e.to_string()));
            }
        }
    }
    Ok(TwoStageFit {
        grid,
        m_hat,
        m_oracle: None,
        delta: None,
        gamma: None,
        eff_n,
        flags,
        index,
        covariates,
        first_stage,
        h: config.h.clone(),
        second_kernel: config.second_kernel,
    })
}

/// Fits the first stage of each column of `T` on `S` and returns the models
/// with the generated covariates at the sample points.
pub fn fit_first_stage(
    dataset: &Dataset,
    config: &TwoStageConfig,
) -> Result<(Vec<LocalPolyModel>, Points)> {
    let t = dataset
        .t
        .as_ref()
        .ok_or(Error::MissingIngredient("first-stage response T"))?;
    let n = dataset.len();
    let d = t.dim();
    let mut models = Vec::with_capacity(d);
    let mut generated = vec![0.0; n * d];
    for j in 0..d {
        let model = LocalPolyModel::new(
            dataset.s.clone(),
            t.column(j),
            config.first_order,
            &[config.g],
            config.first_kernel,
        )?
        .with_ridge(config.first_ridge)?;
        for (i, v) in model.fitted_at_training()?.into_iter().enumerate() {
            generated[i * d + j] = v;
        }
        models.push(model);
    }
    Ok((models, Points::new(d, generated)?))
}

/// Real estimator: local linear regression of `Y` on the generated
/// covariates. Grid points with an empty or singular window are flagged.
pub fn fit_real(dataset: &Dataset, config: &TwoStageConfig) -> Result<TwoStageFit> {
    let d = dataset.t.as_ref().map_or(1, Points::dim);
    config.validate(dataset.s.dim(), d)?;
    let (models, generated) = fit_first_stage(dataset, config)?;
    second_stage(
        generated,
        dataset.s.clone(),
        &dataset.y,
        config,
        Arc::new(models),
    )
}

/// Oracle estimator: local linear regression of `Y` on `r0(S_i)`.
pub fn fit_oracle(dataset: &Dataset, dgp: &DgpSpec, config: &TwoStageConfig) -> Result<TwoStageFit> {
    if dgp.p() != dataset.s.dim() {
        return Err(Error::Dimension {
            expected: dgp.p(),
            got: dataset.s.dim(),
        });
    }
    config.validate(dataset.s.dim(), 1)?;
    let truth = dgp.true_index(&dataset.s);
    second_stage(
        truth,
        dataset.s.clone(),
        &dataset.y,
        config,
        Arc::new(Vec::new()),
    )
}

/// Real and oracle fits on a common grid; the oracle values are attached to
/// the real fit. Without an explicit grid the default grid is built from the
/// true index range of the sample.
pub fn fit_pair(
    dataset: &Dataset,
    dgp: &DgpSpec,
    config: &TwoStageConfig,
) -> Result<(TwoStageFit, TwoStageFit)> {
    let mut config = config.clone();
    if config.grid.is_none() {
        let truth = dgp.true_index(&dataset.s);
        let (lo, hi) = truth.bounds()[0];
        config.grid = Some(default_grid(lo, hi, config.interior_trim, DEFAULT_GRID_SIZE));
    }
    let mut real = fit_real(dataset, &config)?;
    let oracle = fit_oracle(dataset, dgp, &config)?;
    real.attach_oracle(&oracle)?;
    Ok((real, oracle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionMode {
    /// Sample average over the observations.
    Empirical,
    /// Expectation over `S` by quadrature, holding the realized `r_hat` fixed.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionForm {
    /// Kernel average divided by the index density.
    Leading,
    /// Full local linear form `e1' N_h(x)^{-1} E(...)`; empirical mode only.
    Matrix,
}

/// Correction values on the grid. Grid points where the index density is
/// below `1e-8` are NaN and listed in `near_boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub values: Vec<f64>,
    pub near_boundary: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Term {
    Delta,
    Gamma,
}

/// `Delta(x) = E[K_h(r0(S) - x)(r_hat(S) - r0(S))] / f_R(x)`.
pub fn delta_correction(fit: &TwoStageFit, dgp: &DgpSpec, mode: CorrectionMode) -> Result<Correction> {
    correction(fit, dgp, mode, CorrectionForm::Leading, Term::Delta)
}

/// `Gamma(x) = E[K'_h(r0(S) - x)(r_hat(S) - r0(S)) rho(S)] / f_R(x)`.
pub fn gamma_correction(fit: &TwoStageFit, dgp: &DgpSpec, mode: CorrectionMode) -> Result<Correction> {
    correction(fit, dgp, mode, CorrectionForm::Leading, Term::Gamma)
}

pub fn delta_correction_with(
    fit: &TwoStageFit,
    dgp: &DgpSpec,
    mode: CorrectionMode,
    form: CorrectionForm,
) -> Result<Correction> {
    correction(fit, dgp, mode, form, Term::Delta)
}

pub fn gamma_correction_with(
    fit: &TwoStageFit,
    dgp: &DgpSpec,
    mode: CorrectionMode,
    form: CorrectionForm,
) -> Result<Correction> {
    correction(fit, dgp, mode, form, Term::Gamma)
}

fn correction(
    fit: &TwoStageFit,
    dgp: &DgpSpec,
    mode: CorrectionMode,
    form: CorrectionForm,
    term: Term,
) -> Result<Correction> {
    let (truth, err) = fit.first_stage_errors(dgp)?;
    let h = fit.h[0];
    let kernel = fit.second_kernel;
    if matches!(term, Term::Gamma) {
        if !dgp.has_rho() {
            return Ok(Correction {
                values: vec![0.0; fit.grid.len()],
                near_boundary: Vec::new(),
            });
        }
        kernel.derivative(0.0, 1)?;
    }
    if form == CorrectionForm::Matrix && mode == CorrectionMode::Population {
        return Err(Error::param(
            "the matrix form of the corrections is available in empirical mode only",
        ));
    }
    let rho: Vec<f64> = match term {
        Term::Gamma => fit.covariates.rows().map(|s| dgp.rho(s)).collect(),
        Term::Delta => Vec::new(),
    };
    let n = truth.len() as f64;
    let weight = |u: f64| match term {
        Term::Delta => kernel.eval(u / h) / h,
        Term::Gamma => kernel.derivative_unchecked(u / h, 1) / (h * h),
    };
    let mut values = Vec::with_capacity(fit.grid.len());
    let mut near_boundary = Vec::new();
    for (gi, row) in fit.grid.rows().enumerate() {
        let x = row[0];
        let value = match form {
            CorrectionForm::Leading => {
                let f_r = dgp.f_r(x);
                if !(f_r >= MIN_INDEX_DENSITY) {
                    near_boundary.push(gi);
                    values.push(f64::NAN);
                    continue;
                }
                let total = match mode {
                    CorrectionMode::Empirical => {
                        let mut acc = 0.0;
                        for i in 0..truth.len() {
                            let u = truth[i] - x;
                            if u.abs() >= h {
                                continue;
                            }
                            let r = match term {
                                Term::Delta => 1.0,
                                Term::Gamma => rho[i],
                            };
                            acc += weight(u) * err[i] * r;
                        }
                        acc / n
                    }
                    CorrectionMode::Population => population_integral(fit, dgp, x, h, &|s, r_err| {
                        let u = dgp.r0(s) - x;
                        let r = match term {
                            Term::Delta => 1.0,
                            Term::Gamma => dgp.rho(s),
                        };
                        weight(u) * r_err * r
                    })?,
                };
                total / f_r
            }
            CorrectionForm::Matrix => {
                // e1' N^{-1} (1/n) sum W_i (1, (R_i - x)/h)' e_i with N the
                // local linear Gram matrix at x.
                let (mut n00, mut n01, mut n11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..truth.len() {
                    let u = truth[i] - x;
                    if u.abs() >= h {
                        continue;
                    }
                    let k = kernel.eval(u / h) / h;
                    let t = u / h;
                    n00 += k;
                    n01 += k * t;
                    n11 += k * t * t;
                    let r = match term {
                        Term::Delta => 1.0,
                        Term::Gamma => rho[i],
                    };
                    let w = weight(u) * err[i] * r;
                    b0 += w;
                    b1 += w * t;
                }
                let det = n00 * n11 - n01 * n01;
                if !(det > 1e-12 * n00 * n11) || n00 == 0.0 {
                    near_boundary.push(gi);
                    values.push(f64::NAN);
                    continue;
                }
                (n11 * b0 - n01 * b1) / det
            }
        };
        values.push(value);
    }
    Ok(Correction {
        values,
        near_boundary,
    })
}

/// `int F(s, r_hat(s) - r0(s)) f_S(s) ds` over `{s : |r0(s) - x| < h}`,
/// integrating `s_p` between the level sets `x - h` and `x + h`.
fn population_integral(
    fit: &TwoStageFit,
    dgp: &DgpSpec,
    x: f64,
    h: f64,
    f: &dyn Fn(&[f64], f64) -> f64,
) -> Result<f64> {
    let p = dgp.p();
    let support = &dgp.covariates.support;
    let first = &fit.first_stage[0];
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let inner = |s_minus: &[f64]| -> f64 {
        let (a, b) = support[p - 1];
        let e1 = dgp.phi(s_minus, x - h);
        let e2 = dgp.phi(s_minus, x + h);
        let lo = e1.min(e2).max(a);
        let hi = e1.max(e2).min(b);
        if lo >= hi {
            return 0.0;
        }
        quadrature::integrate(
            |t| {
                let mut s = s_minus.to_vec();
                s.push(t);
                let dens = dgp.f_s(&s);
                if dens == 0.0 {
                    return 0.0;
                }
                match first.fit_at(&s) {
                    Ok(fit) => f(&s, fit.alpha - dgp.r0(&s)) * dens,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            },
            lo,
            hi,
            POPULATION_TOL,
        )
    };
    let value = if p == 1 {
        inner(&[])
    } else {
        quadrature::integrate_box(inner, &support[..p - 1], POPULATION_TOL)
    };
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `(sup |m_hat - m_oracle + m0' Delta - Gamma|, sup |m_hat - m_oracle|)`
/// over grid points where every input is finite.
pub fn expansion_residual(
    real: &TwoStageFit,
    oracle: &TwoStageFit,
    delta: &[f64],
    gamma: &[f64],
    dgp: &DgpSpec,
) -> Result<(f64, f64)> {
    check_same_grid(&real.grid, &oracle.grid)?;
    let n = real.grid.len();
    if delta.len() != n || gamma.len() != n {
        return Err(Error::GridMismatch(format!(
            "{} grid points but {} delta and {} gamma values",
            n,
            delta.len(),
            gamma.len()
        )));
    }
    let mut sup_res = 0.0f64;
    let mut sup_raw = 0.0f64;
    for i in 0..n {
        let x = real.grid.row(i)[0];
        let gap = real.m_hat[i] - oracle.m_hat[i];
        let res = gap + dgp.m0_d1(x) * delta[i] - gamma[i];
        if gap.is_finite() && res.is_finite() {
            sup_res = sup_res.max(res.abs());
            sup_raw = sup_raw.max(gap.abs());
        }
    }
    Ok((sup_res, sup_raw))
}
