//! Monte Carlo experiments: seeded data generation, parallel replications,
//! aggregation against the asymptotic predictions, and reports.

pub mod rate;
pub mod report;
pub mod rng;

use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::bandwidth::{
    resolve_bandwidths, Application, BandwidthSpec, Bandwidths, Regime, WindowShape,
};
use crate::censored::{self, CensoredConfig, CensoredDgp};
use crate::dgp::{self, DgpSpec};
use crate::error::{Error, Result};
use crate::generated::{
    self, avar_cor, bias_cor2, default_grid, CorrectionMode, TwoStageConfig, DEFAULT_GRID_SIZE,
};
use crate::kernel::KernelSpec;
use crate::points::{Dataset, Points};
use crate::triangular::{self, TriangularConfig, TriangularDgp};

pub use rate::{log_log_slope, rate_regression, RateMetric};
pub use report::{read_report, sidecar_path, write_report, MonteCarloReport, ReportMetadata, ReportRow};
pub use rng::{mix, replication_rng, splitmix64};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

const Z95: f64 = 1.959963984540054;
const Z99: f64 = 2.5758293035489004;

/// Seeded sample of an index design.
pub fn generate_sample(dgp: &DgpSpec, n: usize, seed: u64) -> Dataset {
    dgp.generate(n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    TwoStage,
    Oracle,
    Censored,
    Triangular,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::TwoStage => "two_stage",
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Censored => "censored",
            EstimatorKind::Triangular => "triangular",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" => Ok(EstimatorKind::TwoStage),
            "oracle" => Ok(EstimatorKind::Oracle),
            "censored" => Ok(EstimatorKind::Censored),
            "triangular" => Ok(EstimatorKind::Triangular),
            other => Err(Error::param(format!(
                "unknown estimator '{other}' (expected two_stage, oracle, censored or triangular)"
            ))),
        }
    }
}

/// Any of the built-in simulation designs.
#[derive(Debug, Clone)]
pub enum ExperimentDgp {
    Index(DgpSpec),
    Censored(CensoredDgp),
    Triangular(TriangularDgp),
}

pub const REFERENCE_DESIGNS: [&str; 5] = ["dgp-a", "dgp-b", "dgp-c", "censored-a", "triangular-a"];

impl ExperimentDgp {
    pub fn reference(name: &str) -> Result<Self> {
        match name {
            "censored-a" => Ok(ExperimentDgp::Censored(censored::censored_a())),
            "triangular-a" => Ok(ExperimentDgp::Triangular(triangular::triangular_a())),
            other => dgp::reference(other).map(ExperimentDgp::Index).map_err(|_| {
                Error::param(format!(
                    "unknown dgp '{other}' (expected one of {})",
                    REFERENCE_DESIGNS.join(", ")
                ))
            }),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ExperimentDgp::Index(d) => &d.name,
            ExperimentDgp::Censored(d) => &d.name,
            ExperimentDgp::Triangular(d) => &d.name,
        }
    }

    /// Dimension of the evaluation points.
    pub fn grid_dim(&self) -> usize {
        match self {
            ExperimentDgp::Index(_) => 1,
            ExperimentDgp::Censored(d) => d.p(),
            ExperimentDgp::Triangular(d) => 1 + d.d1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Equispaced interior points; a single point sits at the center.
    Default { size: usize },
    Explicit(Points),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Default {
            size: DEFAULT_GRID_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    /// First-stage order.
    pub q: usize,
    pub kernel: KernelSpec,
    pub first_kernel: KernelSpec,
    pub bandwidth: BandwidthSpec,
    /// Fraction of the support trimmed on each side of the default grid, in
    /// addition to one bandwidth.
    pub trim: f64,
    /// Compute the expansion residual statistics (two-stage estimator).
    pub expansion: bool,
}

impl EstimatorConfig {
    pub fn new(q: usize, bandwidth: BandwidthSpec) -> Self {
        EstimatorConfig {
            q,
            kernel: KernelSpec::Triweight,
            first_kernel: KernelSpec::Triweight,
            bandwidth,
            trim: 0.0,
            expansion: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub dgp: ExperimentDgp,
    pub estimator: EstimatorKind,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub config: EstimatorConfig,
    pub eval_points: GridSpec,
}

/// Per-`n` evaluation plan shared by all replications.
struct Plan {
    n: usize,
    bw: Bandwidths,
    grid: Points,
    /// Squared normalizing rate, e.g. `n h`.
    scale: f64,
    series: Vec<Series>,
    scalars: Vec<&'static str>,
}

struct Series {
    name: &'static str,
    truth: Vec<f64>,
    /// Bias estimate removed before forming intervals.
    shift: Vec<f64>,
    avar: Vec<Option<f64>>,
}

struct RepOutcome {
    series: Vec<Vec<f64>>,
    scalars: Vec<f64>,
}

impl Experiment {
    fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::param(format!(
                "at least 2 replications are required, got {}",
                self.replications
            )));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("sample sizes must be nonempty and strictly increasing"));
        }
        if !(0.0..0.5).contains(&self.config.trim) {
            return Err(Error::param(format!("trim must lie in [0, 0.5), got {}", self.config.trim)));
        }
        let ok = matches!(
            (&self.dgp, self.estimator),
            (ExperimentDgp::Index(_), EstimatorKind::TwoStage | EstimatorKind::Oracle)
                | (ExperimentDgp::Censored(_), EstimatorKind::Censored)
                | (ExperimentDgp::Triangular(_), EstimatorKind::Triangular)
        );
        if !ok {
            return Err(Error::param(format!(
                "estimator {} does not apply to dgp {}",
                self.estimator.name(),
                self.dgp.name()
            )));
        }
        if let GridSpec::Explicit(g) = &self.eval_points {
            if g.dim() != self.dgp.grid_dim() {
                return Err(Error::Dimension {
                    expected: self.dgp.grid_dim(),
                    got: g.dim(),
                });
            }
            if g.is_empty() {
                return Err(Error::param("evaluation grid is empty"));
            }
        }
        if let GridSpec::Default { size: 0 } = self.eval_points {
            return Err(Error::param("grid size must be positive"));
        }
        if let ExperimentDgp::Index(d) = &self.dgp {
            d.validate()?;
        }
        Ok(())
    }

    /// Sidecar contents for this experiment; timing fields are zero.
    pub fn metadata(&self) -> ReportMetadata {
        let (eta, theta, c_h, c_g, h, g) = match &self.config.bandwidth {
            BandwidthSpec::Rates { eta, theta, c_h, c_g } => {
                (Some(eta[0]), Some(*theta), Some(*c_h), Some(*c_g), None, None)
            }
            BandwidthSpec::Absolute { h, g } => (None, None, None, None, Some(h[0]), Some(*g)),
        };
        let (grid, grid_size) = match &self.eval_points {
            GridSpec::Default { size } => (None, *size),
            GridSpec::Explicit(p) => (Some(format_grid(p)), p.len()),
        };
        ReportMetadata {
            command: "simulate".into(),
            dgp: self.dgp.name().to_string(),
            estimator: self.estimator.name().into(),
            n: self.sample_sizes.clone(),
            reps: self.replications,
            seed: self.seed,
            q: self.config.q,
            kernel: self.config.kernel.name().into(),
            first_kernel: self.config.first_kernel.name().into(),
            eta,
            theta,
            c_h,
            c_g,
            h,
            g,
            trim: self.config.trim,
            grid,
            grid_size,
            expansion: self.config.expansion,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_time_secs: 0.0,
            created_unix: 0,
        }
    }

    fn plan(&self, n: usize) -> Result<Plan> {
        let cfg = &self.config;
        match &self.dgp {
            ExperimentDgp::Index(d) => {
                let bw = resolve_bandwidths(&cfg.bandwidth, n, d.p(), None)?;
                let h = bw.h[0];
                let grid = match &self.eval_points {
                    GridSpec::Explicit(p) => p.clone(),
                    GridSpec::Default { size } => {
                        let (lo, hi) = d.index_range();
                        interior_grid(lo, hi, cfg.trim, h, *size)
                    }
                };
                let xs: Vec<f64> = grid.rows().map(|r| r[0]).collect();
                let truth: Vec<f64> = xs.iter().map(|x| d.m0(*x)).collect();
                let oracle_shift: Vec<f64> = xs
                    .iter()
                    .map(|x| 0.5 * h * h * cfg.kernel.moment(2) * d.m0_d2(*x))
                    .collect();
                let oracle_avar: Vec<Option<f64>> = xs
                    .iter()
                    .map(|x| avar_cor(d, *x, Regime::GSlower, cfg.kernel, cfg.first_kernel).ok())
                    .collect();
                let oracle = Series {
                    name: "oracle",
                    truth: truth.clone(),
                    shift: oracle_shift.clone(),
                    avar: oracle_avar,
                };
                let mut series = Vec::new();
                let mut scalars = Vec::new();
                if self.estimator == EstimatorKind::TwoStage {
                    let regime = bw.regime();
                    let shift = if regime == Regime::EqualBw {
                        xs.iter()
                            .map(|x| bias_cor2(d, *x, h, cfg.kernel, cfg.first_kernel).unwrap_or(f64::NAN))
                            .collect()
                    } else {
                        oracle_shift
                    };
                    let avar = xs
                        .iter()
                        .map(|x| avar_cor(d, *x, regime, cfg.kernel, cfg.first_kernel).ok())
                        .collect();
                    series.push(Series {
                        name: "two_stage",
                        truth,
                        shift,
                        avar,
                    });
                    if cfg.expansion {
                        scalars = vec!["sup_residual", "sup_raw_gap"];
                    }
                }
                series.push(oracle);
                Ok(Plan {
                    n,
                    scale: n as f64 * h,
                    bw,
                    grid,
                    series,
                    scalars,
                })
            }
            ExperimentDgp::Censored(d) => {
                let p = d.p();
                let shape = WindowShape { p, q: cfg.q, d1: 0 };
                let window = matches!(cfg.bandwidth, BandwidthSpec::Rates { .. })
                    .then_some((Application::Censored, shape));
                let bw = resolve_bandwidths(&cfg.bandwidth, n, p, window)?;
                let grid = match &self.eval_points {
                    GridSpec::Explicit(pts) => pts.clone(),
                    GridSpec::Default { size } => {
                        if p != 1 {
                            return Err(Error::param("a default grid needs a scalar covariate; pass --grid"));
                        }
                        let (lo, hi) = d.covariates.support[0];
                        interior_grid(lo, hi, cfg.trim, bw.g, *size)
                    }
                };
                let truth = grid.rows().map(|x| d.mu0(x)).collect();
                let avar = grid
                    .rows()
                    .map(|x| censored::censored_avar(d, x, cfg.first_kernel).ok())
                    .collect();
                Ok(Plan {
                    n,
                    scale: n as f64 * bw.g.powi(p as i32),
                    series: vec![Series {
                        name: "censored",
                        truth,
                        shift: vec![0.0; grid.len()],
                        avar,
                    }],
                    bw,
                    grid,
                    scalars: vec![],
                })
            }
            ExperimentDgp::Triangular(d) => {
                let p = d.instruments.dim();
                let shape = WindowShape {
                    p,
                    q: cfg.q,
                    d1: d.d1,
                };
                let window = matches!(cfg.bandwidth, BandwidthSpec::Rates { .. })
                    .then_some((Application::Triangular, shape));
                let bw = resolve_bandwidths(&cfg.bandwidth, n, p, window)?;
                let grid = match &self.eval_points {
                    GridSpec::Explicit(pts) => pts.clone(),
                    GridSpec::Default { .. } => {
                        let center: Vec<f64> =
                            d.instruments.support.iter().map(|(a, b)| 0.5 * (a + b)).collect();
                        let mut point = vec![(d.mu2)(&center)];
                        point.extend_from_slice(&center[..d.d1]);
                        Points::new(1 + d.d1, point)?
                    }
                };
                let truth: Vec<f64> = grid.rows().map(|r| d.target(r[0], &r[1..])).collect();
                let avar: Vec<Option<f64>> = grid
                    .rows()
                    .map(|r| triangular::triangular_avar(d, r[0], &r[1..], cfg.kernel).ok())
                    .collect();
                let zeros = vec![0.0; grid.len()];
                Ok(Plan {
                    n,
                    scale: n as f64 * bw.h[0].powi(1 + d.d1 as i32),
                    series: vec![
                        Series {
                            name: "triangular",
                            truth: truth.clone(),
                            shift: zeros.clone(),
                            avar: avar.clone(),
                        },
                        Series {
                            name: "triangular_oracle",
                            truth,
                            shift: zeros,
                            avar,
                        },
                    ],
                    bw,
                    grid,
                    scalars: vec![],
                })
            }
        }
    }

    fn replicate(&self, plan: &Plan, rep: usize) -> Result<RepOutcome> {
        let cfg = &self.config;
        let mut rng = replication_rng(self.seed, plan.n, rep);
        match &self.dgp {
            ExperimentDgp::Index(d) => {
                let data = d.sample(plan.n, &mut rng);
                let mut tc = TwoStageConfig::new(cfg.q, plan.bw.h[0], plan.bw.g).with_grid(plan.grid.clone());
                tc.h = plan.bw.h.clone();
                tc.first_kernel = cfg.first_kernel;
                tc.second_kernel = cfg.kernel;
                if self.estimator == EstimatorKind::Oracle {
                    let oracle = generated::fit_oracle(&data, d, &tc)?;
                    return Ok(RepOutcome {
                        series: vec![oracle.m_hat],
                        scalars: vec![],
                    });
                }
                let (real, oracle) = generated::fit_pair(&data, d, &tc)?;
                let scalars = if cfg.expansion {
                    let delta = generated::delta_correction(&real, d, CorrectionMode::Empirical)?;
                    let gamma = generated::gamma_correction(&real, d, CorrectionMode::Empirical)?;
                    let (res, raw) = generated::expansion_residual(&real, &oracle, &delta.values, &gamma.values, d)?;
                    vec![res, raw]
                } else {
                    vec![]
                };
                Ok(RepOutcome {
                    series: vec![real.m_hat, oracle.m_hat],
                    scalars,
                })
            }
            ExperimentDgp::Censored(d) => {
                let s = d.sample(plan.n, &mut rng);
                let mut cc = CensoredConfig::new(cfg.q, plan.bw.g, plan.bw.h[0]);
                cc.first_kernel = cfg.first_kernel;
                cc.second_kernel = cfg.kernel;
                let fit = censored::fit_censored(&s.x, &s.y, &plan.grid, &cc)?;
                Ok(RepOutcome {
                    series: vec![fit.mu_hat],
                    scalars: vec![],
                })
            }
            ExperimentDgp::Triangular(d) => {
                let s = d.sample(plan.n, &mut rng);
                let mut tc = TriangularConfig::new(cfg.q, plan.bw.g, plan.bw.h[0]);
                tc.first_kernel = cfg.first_kernel;
                tc.second_kernel = cfg.kernel;
                let real = triangular::fit_triangular(&s.y, &s.x1, &s.z1, &s.z2, &plan.grid, &tc)?;
                let oracle = triangular::fit_with_controls(&s.y, &s.x1, &s.z1, &s.v, &plan.grid, &tc)?;
                Ok(RepOutcome {
                    series: vec![real.mu1_hat, oracle.mu1_hat],
                    scalars: vec![],
                })
            }
        }
    }
}

fn interior_grid(lo: f64, hi: f64, trim: f64, bandwidth: f64, size: usize) -> Points {
    let range = hi - lo;
    let t = (trim + bandwidth / range).min(0.45);
    default_grid(lo, hi, t, size)
}

/// Grid points as `a,b;c,d`.
pub fn format_grid(points: &Points) -> String {
    points
        .rows()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`format_grid`]. Without `;`, values are read in groups of `dim`.
pub fn parse_grid(text: &str, dim: usize) -> Result<Points> {
    let values: Vec<f64> = text
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::param(format!("grid value '{s}' is not a finite number")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() || dim == 0 || !values.len().is_multiple_of(dim) {
        return Err(Error::param(format!(
            "grid needs a positive multiple of {dim} values, got {}",
            values.len()
        )));
    }
    Points::new(dim, values)
}

/// Runs every replication at every sample size and aggregates.
pub fn run_experiment(exp: &Experiment) -> Result<MonteCarloReport> {
    exp.validate()?;
    let started = Instant::now();
    let mut rows = Vec::new();
    for &n in &exp.sample_sizes {
        let plan = exp.plan(n)?;
        let outcomes: Vec<Result<RepOutcome>> = (0..exp.replications)
            .into_par_iter()
            .map(|rep| exp.replicate(&plan, rep))
            .collect();
        aggregate(exp, &plan, &outcomes, &mut rows)?;
    }
    let mut metadata = exp.metadata();
    metadata.wall_time_secs = started.elapsed().as_secs_f64();
    metadata.created_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(MonteCarloReport {
        x_dim: exp.dgp.grid_dim(),
        rows,
        metadata,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn aggregate(exp: &Experiment, plan: &Plan, outcomes: &[Result<RepOutcome>], rows: &mut Vec<ReportRow>) -> Result<()> {
    let reps = outcomes.len();
    let limit = (MAX_FAILURE_RATE * reps as f64).floor() as usize;
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed > limit {
        if let Some(Err(e)) = outcomes.iter().find(|o| o.is_err()) {
            log::error!("first replication failure at n = {}: {e}", plan.n);
        }
        return Err(Error::FailureRateExceeded {
            n: plan.n,
            failures: failed,
            total: reps,
        });
    }
    let ok: Vec<&RepOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let n = plan.n;
    let est0 = exp.estimator.name();
    let push = |rows: &mut Vec<ReportRow>, x: Vec<f64>, estimator: &str, stat: &str, value: f64, nf: usize| {
        if value.is_finite() {
            rows.push(ReportRow {
                n,
                x,
                estimator: estimator.to_string(),
                stat: stat.to_string(),
                value,
                n_failures: nf,
            });
        }
    };
    push(rows, vec![], est0, "h", plan.bw.h[0], failed);
    push(rows, vec![], est0, "g", plan.bw.g, failed);
    push(rows, vec![], est0, "replications", reps as f64, failed);

    for (si, series) in plan.series.iter().enumerate() {
        for (gi, x) in plan.grid.rows().enumerate() {
            let values: Vec<f64> = ok
                .iter()
                .map(|o| o.series[si][gi])
                .filter(|v| v.is_finite())
                .collect();
            let nf = reps - values.len();
            if nf > limit {
                return Err(Error::FailureRateExceeded {
                    n,
                    failures: nf,
                    total: reps,
                });
            }
            let truth = series.truth[gi];
            let m = mean(&values);
            let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
            let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / values.len() as f64;
            let x = x.to_vec();
            push(rows, x.clone(), series.name, "mean", m, nf);
            push(rows, x.clone(), series.name, "bias", m - truth, nf);
            push(rows, x.clone(), series.name, "variance", var, nf);
            push(rows, x.clone(), series.name, "rmse", mse.sqrt(), nf);
            push(rows, x.clone(), series.name, "scaled_variance", var * plan.scale, nf);
            if let Some(avar) = series.avar[gi] {
                let se = (avar / plan.scale).sqrt();
                let shift = series.shift[gi];
                let cover = |z: f64| {
                    values
                        .iter()
                        .filter(|v| (*v - shift - truth).abs() <= z * se)
                        .count() as f64
                        / values.len() as f64
                };
                push(rows, x.clone(), series.name, "avar", avar, nf);
                if shift.is_finite() {
                    push(rows, x.clone(), series.name, "coverage95", cover(Z95), nf);
                    push(rows, x.clone(), series.name, "coverage99", cover(Z99), nf);
                }
            }
            if si == 0 && plan.series.len() > 1 {
                let gaps: Vec<f64> = ok
                    .iter()
                    .map(|o| (o.series[0][gi] - o.series[1][gi]).abs())
                    .filter(|v| v.is_finite())
                    .collect();
                if !gaps.is_empty() {
                    push(rows, x.clone(), series.name, "mean_abs_gap", mean(&gaps), reps - gaps.len());
                }
            }
        }
        let sups: Vec<f64> = ok
            .iter()
            .filter(|o| o.series[si].iter().all(|v| v.is_finite()))
            .map(|o| {
                o.series[si]
                    .iter()
                    .zip(&series.truth)
                    .map(|(v, t)| (v - t).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let nf = reps - sups.len();
        for s in &sups {
            push(rows, vec![], series.name, "sup_error", *s, nf);
        }
        if !sups.is_empty() {
            push(rows, vec![], series.name, "mean_sup_error", mean(&sups), nf);
            push(rows, vec![], series.name, "median_sup_error", median(&sups), nf);
        }
    }

    if !plan.scalars.is_empty() {
        for (k, name) in plan.scalars.iter().enumerate() {
            let vals: Vec<f64> = ok.iter().map(|o| o.scalars[k]).filter(|v| v.is_finite()).collect();
            for v in &vals {
                push(rows, vec![], est0, name, *v, reps - vals.len());
            }
        }
        let ratios: Vec<f64> = ok
            .iter()
            .filter(|o| o.scalars[1] > 0.0)
            .map(|o| o.scalars[0] / o.scalars[1])
            .collect();
        for v in &ratios {
            push(rows, vec![], est0, "residual_ratio", *v, reps - ratios.len());
        }
        if !ratios.is_empty() {
            push(rows, vec![], est0, "median_residual_ratio", median(&ratios), reps - ratios.len());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimator: EstimatorKind, dgp: &str) -> Experiment {
        Experiment {
            dgp: ExperimentDgp::reference(dgp).unwrap(),
            estimator,
            sample_sizes: vec![200, 300],
            replications: 4,
            seed: 3,
            config: EstimatorConfig::new(
                1,
                BandwidthSpec::Rates {
                    eta: vec![0.2],
                    theta: 0.3,
                    c_h: 1.0,
                    c_g: 1.0,
                },
            ),
            eval_points: GridSpec::Default { size: 5 },
        }
    }

    #[test]
    fn rmse_identity_and_schema() {
        let report = run_experiment(&small(EstimatorKind::TwoStage, "dgp-a")).unwrap();
        for n in [200, 300] {
            let grid = report.grid(n);
            assert_eq!(grid.len(), 5);
            for x in &grid {
                for est in ["two_stage", "oracle"] {
                    let b = report.value(n, x, est, "bias").unwrap();
                    let v = report.value(n, x, est, "variance").unwrap();
                    let r = report.value(n, x, est, "rmse").unwrap();
                    assert!((r * r - b * b - v).abs() <= 1e-10 * r * r);
                    let c95 = report.value(n, x, est, "coverage95").unwrap();
                    let c99 = report.value(n, x, est, "coverage99").unwrap();
                    assert!((0.0..=1.0).contains(&c95) && c99 >= c95);
                }
            }
            assert_eq!(report.values(n, &[], "two_stage", "sup_error").len(), 4);
        }
    }

    #[test]
    fn rejects_mismatched_estimator() {
        let mut e = small(EstimatorKind::Censored, "dgp-a");
        assert!(run_experiment(&e).is_err());
        e.estimator = EstimatorKind::TwoStage;
        e.replications = 1;
        assert!(run_experiment(&e).is_err());
        e.replications = 2;
        e.sample_sizes = vec![300, 200];
        assert!(run_experiment(&e).is_err());
    }

    #[test]
    fn grid_text_round_trip() {
        let p = Points::new(2, vec![2.5, 0.5, 1.0, 0.25]).unwrap();
        assert_eq!(parse_grid(&format_grid(&p), 2).unwrap(), p);
        assert_eq!(parse_grid("0.1,0.2,0.3", 1).unwrap().len(), 3);
        assert!(parse_grid("0.1,x", 1).is_err());
        assert!(parse_grid("0.1,0.2,0.3", 2).is_err());
    }
}
