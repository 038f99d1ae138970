//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use gencov::bandwidth::{bandwidth_window, Application, BandwidthSpec, WindowShape};
use gencov::censored::{censored_a, fit_censored, CensoredConfig, IntegralSign};
use gencov::dgp::{dgp_a, dgp_b};
use gencov::generated::{rate_kappa, ComplexityParams};
use gencov::quadrature::integrate_box;
use gencov::sim::{
    generate_sample, rate_regression, replication_rng, run_experiment, EstimatorConfig,
    EstimatorKind, Experiment, ExperimentDgp, GridSpec, MonteCarloReport, RateMetric,
};
use gencov::{EquivalentKernel, KernelSpec, LocalPolyModel, MultiIndexBasis, Points};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, u64);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rates(eta: f64, theta: f64, c_h: f64, c_g: f64) -> BandwidthSpec {
    BandwidthSpec::Rates {
        eta: vec![eta],
        theta,
        c_h,
        c_g,
    }
}

fn experiment(
    dgp: &str,
    estimator: EstimatorKind,
    n: Vec<usize>,
    reps: usize,
    seed: u64,
    config: EstimatorConfig,
    eval_points: GridSpec,
) -> Result<MonteCarloReport, String> {
    let exp = Experiment {
        dgp: ExperimentDgp::reference(dgp).map_err(|e| e.to_string())?,
        estimator,
        sample_sizes: n,
        replications: reps,
        seed,
        config,
        eval_points,
    };
    run_experiment(&exp).map_err(|e| e.to_string())
}

fn stat(r: &MonteCarloReport, n: usize, x: &[f64], est: &str, name: &str) -> Result<f64, String> {
    r.value(n, x, est, name)
        .ok_or_else(|| format!("report has no {est}/{name} at n = {n}, x = {x:?}"))
}

fn point(x: &[f64]) -> GridSpec {
    GridSpec::Explicit(Points::new(x.len(), x.to_vec()).expect("nonempty point"))
}

fn exactness() -> Outcome {
    let mut worst = 0.0f64;
    for p in 1..=2 {
        let sample = if p == 1 {
            generate_sample(&dgp_a(), 400, 1).s
        } else {
            generate_sample(&dgp_b(), 2000, 1).s
        };
        let eval = if p == 1 {
            generate_sample(&dgp_a(), 20, 2).s
        } else {
            generate_sample(&dgp_b(), 20, 2).s
        };
        for q in 0..=3 {
            let basis = MultiIndexBasis::new(p, q).map_err(|e| e.to_string())?;
            let coeffs: Vec<f64> = (0..basis.len()).map(|k| 1.0 - 0.37 * k as f64).collect();
            let poly = |s: &[f64]| -> f64 {
                basis.monomials(s).iter().zip(&coeffs).map(|(m, c)| m * c).sum()
            };
            let y: Vec<f64> = sample.rows().map(poly).collect();
            let model = LocalPolyModel::new(sample.clone(), y, q, &[0.35], KernelSpec::Triweight)
                .map_err(|e| e.to_string())?;
            for at in eval.rows() {
                // Map the evaluation point into [0.25, 0.75]^p.
                let at: Vec<f64> = at.iter().map(|v| 0.25 + 0.5 * v).collect();
                let fit = model.fit_at(&at).map_err(|e| format!("p={p} q={q}: {e}"))?;
                worst = worst.max((fit.alpha - poly(&at)).abs());
            }
        }
    }
    check(worst <= 1e-8, format!("max error {worst:.2e} (limit 1e-8)"))
}

fn moments() -> Outcome {
    let mut worst = 0.0f64;
    for kernel in [KernelSpec::Triweight, KernelSpec::Quartic] {
        for p in 1..=2 {
            for q in 0..=4 {
                let basis = MultiIndexBasis::new(p, q).map_err(|e| e.to_string())?;
                let lstar = EquivalentKernel::new(kernel, &basis).map_err(|e| e.to_string())?;
                for u in basis.indices() {
                    let m = integrate_box(
                        |t| {
                            lstar.eval(t)
                                * t.iter().zip(u).map(|(v, &k)| v.powi(k as i32)).product::<f64>()
                        },
                        &vec![(-1.0, 1.0); p],
                        1e-10,
                    );
                    let target = if u.iter().all(|&k| k == 0) { 1.0 } else { 0.0 };
                    worst = worst.max((m - target).abs());
                }
            }
        }
    }
    check(worst <= 1e-6, format!("max moment error {worst:.2e} (limit 1e-6)"))
}

fn normality() -> Outcome {
    let (n, x) = (2000, [0.5]);
    let r = experiment(
        "dgp-a",
        EstimatorKind::TwoStage,
        vec![n],
        500,
        11,
        EstimatorConfig::new(1, rates(0.2, 0.25, 0.5, 0.5)),
        point(&x),
    )?;
    let scaled = stat(&r, n, &x, "two_stage", "scaled_variance")?;
    let avar = stat(&r, n, &x, "two_stage", "avar")?;
    let cover = stat(&r, n, &x, "two_stage", "coverage95")?;
    let ratio = scaled / avar;
    check(
        (ratio - 1.0).abs() <= 0.2 && (0.90..=0.98).contains(&cover),
        format!("variance {scaled:.4} vs {avar:.4} (ratio {ratio:.3}), coverage {cover:.3}"),
    )
}

fn expansion() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for dgp in ["dgp-a", "dgp-b"] {
        let mut config = EstimatorConfig::new(1, rates(0.2, 0.2, 1.0, 1.0));
        config.expansion = true;
        let r = experiment(dgp, EstimatorKind::TwoStage, vec![1000, 4000], 200, 5, config, GridSpec::default())?;
        let small = stat(&r, 1000, &[], "two_stage", "median_residual_ratio")?;
        let large = stat(&r, 4000, &[], "two_stage", "median_residual_ratio")?;
        ok &= large < 0.5 && large < small;
        parts.push(format!("{dgp} {small:.3} -> {large:.3}"));
    }
    check(ok, format!("median residual ratio {}", parts.join(", ")))
}

fn oracle_equivalence() -> Outcome {
    let (n, x) = (4000, [0.35]);
    let r = experiment(
        "dgp-c",
        EstimatorKind::TwoStage,
        vec![n],
        300,
        5,
        EstimatorConfig::new(2, rates(0.2, 0.15, 1.0, 1.0)),
        point(&x),
    )?;
    let ratio = stat(&r, n, &x, "two_stage", "variance")? / stat(&r, n, &x, "oracle", "variance")?;
    let gap = stat(&r, n, &x, "two_stage", "mean_abs_gap")?;
    let rmse = stat(&r, n, &x, "oracle", "rmse")?;
    check(
        (0.85..=1.18).contains(&ratio) && gap < 0.25 * rmse,
        format!("variance ratio {ratio:.3}, mean gap {gap:.4} vs 0.25 x rmse {:.4}", 0.25 * rmse),
    )
}

fn rate() -> Outcome {
    let r = experiment(
        "dgp-a",
        EstimatorKind::TwoStage,
        vec![500, 1000, 2000, 4000],
        100,
        5,
        EstimatorConfig::new(1, rates(0.2, 0.25, 0.5, 0.5)),
        GridSpec::default(),
    )?;
    let (slope, se) = rate_regression(&r, &RateMetric::SupError, "two_stage").map_err(|e| e.to_string())?;
    check(
        (-0.5..=-0.25).contains(&slope),
        format!("log-log slope {slope:.3} (se {se:.3})"),
    )
}

fn censored_mc_rmse(sign: IntegralSign, reps: usize) -> Result<f64, String> {
    let dgp = censored_a();
    let n = 2000;
    let g = (n as f64).powf(-0.3);
    let grid = Points::from_column(vec![0.5]);
    let mut sq = 0.0;
    for rep in 0..reps {
        let s = dgp.sample(n, &mut replication_rng(13, n, rep));
        let mut config = CensoredConfig::new(1, g, g);
        config.sign = sign;
        let fit = fit_censored(&s.x, &s.y, &grid, &config).map_err(|e| e.to_string())?;
        sq += (fit.mu_hat[0] - dgp.mu0(&[0.5])).powi(2);
    }
    Ok((sq / reps as f64).sqrt())
}

fn censored() -> Outcome {
    let (n, x) = (2000, [0.5]);
    let (lo, hi) = bandwidth_window(Application::Censored, WindowShape { p: 1, q: 1, d1: 0 }, 0.2)
        .map_err(|e| e.to_string())?;
    let theta = 0.3;
    let r = experiment(
        "censored-a",
        EstimatorKind::Censored,
        vec![n],
        300,
        11,
        EstimatorConfig::new(1, rates(0.2, theta, 1.0, 1.0)),
        point(&x),
    )?;
    let ratio = stat(&r, n, &x, "censored", "scaled_variance")? / stat(&r, n, &x, "censored", "avar")?;

    let s = censored_a().sample(n, &mut replication_rng(1, n, 0));
    let y: Vec<f64> = s.y.iter().map(|v| v + 3.0).collect();
    let g = (n as f64).powf(-theta);
    let grid = Points::from_column(vec![0.2, 0.5, 0.8]);
    let fit = fit_censored(&s.x, &y, &grid, &CensoredConfig::new(1, g, g)).map_err(|e| e.to_string())?;
    let shortcut = fit
        .mu_hat
        .iter()
        .zip(&fit.r_hat)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let minus = censored_mc_rmse(IntegralSign::Minus, 50)?;
    let plus = censored_mc_rmse(IntegralSign::Plus, 50)?;
    check(
        lo < theta && theta < hi && (ratio - 1.0).abs() <= 0.25 && shortcut <= 1e-6 && plus >= 3.0 * minus,
        format!(
            "theta {theta} in ({lo}, {hi}), variance ratio {ratio:.3}, shortcut error {shortcut:.1e}, \
             rmse minus {minus:.4} vs plus {plus:.4}"
        ),
    )
}

fn triangular() -> Outcome {
    let (n, x) = (2000, [2.5, 0.5]);
    let (lo, hi) = bandwidth_window(Application::Triangular, WindowShape { p: 2, q: 3, d1: 1 }, 0.2)
        .map_err(|e| e.to_string())?;
    let theta = 0.09;
    let r = experiment(
        "triangular-a",
        EstimatorKind::Triangular,
        vec![n],
        300,
        11,
        EstimatorConfig::new(3, rates(0.2, theta, 1.2, 1.0)),
        point(&x),
    )?;
    let real_oracle = stat(&r, n, &x, "triangular", "variance")? / stat(&r, n, &x, "triangular_oracle", "variance")?;
    let scaled = stat(&r, n, &x, "triangular", "scaled_variance")?;
    let avar = stat(&r, n, &x, "triangular", "avar")?;
    let ratio = scaled / avar;
    check(
        lo < theta && theta < hi && (0.75..=1.33).contains(&real_oracle) && (ratio - 1.0).abs() <= 0.3,
        format!("real/oracle variance {real_oracle:.3}, variance {scaled:.4} vs {avar:.4} (ratio {ratio:.3})"),
    )
}

fn arithmetic() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let k = rate_kappa(&ComplexityParams {
        delta: vec![0.4],
        alpha: vec![1.0],
        xi: vec![0.0],
        eta: vec![0.2],
    })
    .map_err(|e| e.to_string())?;
    let kappa_ok = close(k.kappa1, 0.4) && close(k.kappa2, 0.6) && close(k.kappa3, 0.6) && close(k.kappa, 0.4);
    let c1 = bandwidth_window(Application::Censored, WindowShape { p: 1, q: 1, d1: 0 }, 0.2);
    let c4 = bandwidth_window(Application::Censored, WindowShape { p: 4, q: 1, d1: 0 }, 0.2);
    let t = bandwidth_window(Application::Triangular, WindowShape { p: 2, q: 3, d1: 1 }, 0.2);
    let window_ok = matches!(c1, Ok((lo, hi)) if close(lo, 0.2) && close(hi, 0.4))
        && c4.is_err()
        && matches!(t, Ok((lo, hi)) if close(lo, 0.075) && close(hi, 0.1));
    check(
        kappa_ok && window_ok,
        format!(
            "kappa ({}, {}, {}, {}), windows {c1:?}, {t:?}, p = 4 infeasible: {}",
            k.kappa, k.kappa1, k.kappa2, k.kappa3,
            c4.is_err()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bodies = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_gencov"))
            .args(["simulate", "--dgp", "dgp-a", "--n", "500,1000", "--reps", "40", "--seed", "3"])
            .args(["--expansion", "--threads", threads, "--output"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("simulate exited with {status}"));
        }
        bodies.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    let same = bodies.windows(2).all(|w| w[0] == w[1]);
    check(same, format!("{} identical report bodies of {} bytes", bodies.len(), bodies[0].len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("local polynomial exactness", exactness, 10),
        ("equivalent kernel moments", moments, 30),
        ("asymptotic normality and variance", normality, 300),
        ("stochastic expansion", expansion, 600),
        ("oracle equivalence", oracle_equivalence, 300),
        ("uniform convergence rate", rate, 600),
        ("censored regression", censored, 300),
        ("triangular model", triangular, 600),
        ("rate calculator and bandwidth windows", arithmetic, 1),
        ("determinism across thread counts", determinism, 120),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.1} s, limit {limit} s", elapsed.as_secs_f64());
        println!(
            "{} [{:>2}] {name}: {detail} ({timing})",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
