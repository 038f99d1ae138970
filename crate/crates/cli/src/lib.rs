//! Command-line front end for the gencov estimators and Monte Carlo harness.

pub mod args;
pub mod data;

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::CommandFactory;
use gencov::bandwidth::{bandwidth_window, resolve_bandwidths, Application, BandwidthSpec, WindowShape};
use gencov::censored::{self, CensoredConfig};
use gencov::generated::{self, rate_kappa, ComplexityParams, TwoStageConfig, DEFAULT_GRID_SIZE};
use gencov::sim::{self, EstimatorConfig, EstimatorKind, Experiment, ExperimentDgp, GridSpec};
use gencov::triangular::{self, TriangularConfig};
use gencov::{dgp, Dataset, Error, ErrorCategory, KernelSpec, Points, Result};

pub use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_EXPERIMENT: i32 = 5;

pub fn exit_code(category: ErrorCategory) -> i32 {
    match category {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Numeric => EXIT_NUMERIC,
        ErrorCategory::Experiment => EXIT_EXPERIMENT,
    }
}

fn category_name(category: ErrorCategory) -> &'static str {
    match category {
        ErrorCategory::Config => "config",
        ErrorCategory::Data => "data",
        ErrorCategory::Numeric => "numeric",
        ErrorCategory::Experiment => "experiment",
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status. Errors go to stderr as `error[category]: ...`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::parse(args) {
        Ok(cli) => cli,
        Err(args::ParseFailure::Clap(e)) => {
            let _ = e.print();
            if !e.use_stderr() {
                return EXIT_OK;
            }
            eprintln!("\n{}", Cli::command().render_usage());
            return EXIT_CONFIG;
        }
        Err(args::ParseFailure::Config(e)) => return report(&e),
    };
    init_logging(cli.verbose);
    let Some(command) = cli.command else {
        eprintln!("error[config]: no command given\n");
        let _ = Cli::command().print_help();
        return EXIT_CONFIG;
    };
    let outcome = match cli.threads {
        Some(0) => Err(Error::param("--threads must be positive")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::param(format!("cannot start {t} worker threads: {e}")))
            .and_then(|pool| pool.install(|| dispatch(command, &cli))),
        None => dispatch(command, &cli),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => report(&e),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn report(e: &Error) -> i32 {
    let category = e.category();
    eprintln!("error[{}]: {e}", category_name(category));
    exit_code(category)
}

pub fn dispatch(command: Command, cli: &Cli) -> Result<()> {
    log::info!("running {}", command.name());
    match command {
        Command::Fit => fit(cli, false),
        Command::OracleFit => fit(cli, true),
        Command::Censored => censored_cmd(cli),
        Command::Triangular => triangular_cmd(cli),
        Command::Simulate => simulate(cli),
        Command::Rates => rates(cli),
        Command::Window => window(cli),
    }
}

fn kernel(name: &Option<String>) -> Result<KernelSpec> {
    name.as_deref().map_or(Ok(KernelSpec::Triweight), str::parse)
}

/// Bandwidths given absolutely (`--h`, `--g`) or by exponents, with the
/// exponent defaults used when neither form is given.
fn bandwidth_spec(cli: &Cli, default: (f64, f64)) -> Result<BandwidthSpec> {
    let absolute = cli.h.is_some() || cli.g.is_some();
    let rates = cli.eta.is_some() || cli.theta.is_some() || cli.c_h.is_some() || cli.c_g.is_some();
    if absolute && rates {
        return Err(Error::param(
            "give bandwidths either absolutely (--h, --g) or by exponents (--eta, --theta, --c-h, --c-g), not both",
        ));
    }
    if absolute {
        return match (cli.h, cli.g) {
            (Some(h), Some(g)) => Ok(BandwidthSpec::Absolute { h: vec![h], g }),
            _ => Err(Error::param("absolute bandwidths need both --h and --g")),
        };
    }
    let eta = match &cli.eta {
        Some(e) => args::parse_list::<f64>("eta", e)?,
        None => vec![default.0],
    };
    Ok(BandwidthSpec::Rates {
        eta,
        theta: cli.theta.unwrap_or(default.1),
        c_h: cli.c_h.unwrap_or(1.0),
        c_g: cli.c_g.unwrap_or(1.0),
    })
}

fn single_n(cli: &Cli) -> Result<usize> {
    let text = cli
        .n
        .as_deref()
        .ok_or_else(|| Error::param("--n is required when simulating a sample from --dgp"))?;
    match args::parse_list::<usize>("n", text)?.as_slice() {
        [n] if *n >= 2 => Ok(*n),
        _ => Err(Error::param("--n must be a single sample size of at least 2 here")),
    }
}

fn input_or_dgp(cli: &Cli, dgp_required: bool) -> Result<()> {
    match (&cli.input, &cli.dgp) {
        (Some(_), Some(_)) if !dgp_required => {
            Err(Error::param("give either --input or --dgp, not both"))
        }
        (None, None) => Err(Error::param("an --input file or a --dgp design is required")),
        (_, None) if dgp_required => Err(Error::param("--dgp is required (the true index comes from the design)")),
        _ => Ok(()),
    }
}

fn grid_arg(cli: &Cli, dim: usize) -> Result<Option<Points>> {
    cli.grid.as_deref().map(|g| sim::parse_grid(g, dim)).transpose()
}

fn fmt_opt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn write_plot(cli: &Cli, name: &str, grid: &Points, values: &[f64]) -> Result<()> {
    let Some(dir) = &cli.plot_dir else {
        return Ok(());
    };
    if grid.dim() != 1 {
        log::warn!("plot files need a one-dimensional grid; skipping {name}");
        return Ok(());
    }
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    data::write_curve(&dir.join(format!("{name}.txt")), grid.as_slice(), values)
}

fn fit(cli: &Cli, oracle: bool) -> Result<()> {
    input_or_dgp(cli, oracle)?;
    let design = cli.dgp.as_deref().map(dgp::reference).transpose()?;
    let dataset: Dataset = match (&cli.input, &design) {
        (Some(path), _) => data::load_dataset(path)?,
        (None, Some(d)) => {
            let ds = sim::generate_sample(d, single_n(cli)?, cli.seed.unwrap_or(0));
            if let Some(p) = &cli.save_sample {
                data::write_dataset(p, &ds)?;
            }
            ds
        }
        (None, None) => unreachable!("checked above"),
    };
    let d = dataset.t.as_ref().map_or(1, Points::dim);
    let bw = resolve_bandwidths(&bandwidth_spec(cli, (0.2, 0.25))?, dataset.len(), dataset.s.dim(), None)?;
    let mut config = TwoStageConfig::new(cli.q.unwrap_or(1), bw.h[0], bw.g).with_trim(cli.trim.unwrap_or(0.0));
    config.h = if bw.h.len() == d { bw.h.clone() } else { vec![bw.h[0]; d] };
    config.first_kernel = kernel(&cli.first_kernel)?;
    config.second_kernel = kernel(&cli.kernel)?;
    if let Some(g) = grid_arg(cli, d)? {
        config = config.with_grid(g);
    } else if d == 1 && cli.grid_size.is_some() {
        let index = match (&design, oracle) {
            (Some(dg), true) => dg.true_index(&dataset.s),
            _ => generated::fit_first_stage(&dataset, &config)?.1,
        };
        let (lo, hi) = index.bounds()[0];
        let grid = generated::default_grid(lo, hi, config.interior_trim, cli.grid_size.unwrap_or(DEFAULT_GRID_SIZE));
        config = config.with_grid(grid);
    }
    let fit = if oracle {
        generated::fit_oracle(&dataset, design.as_ref().expect("checked above"), &config)?
    } else {
        generated::fit_real(&dataset, &config)?
    };
    log::info!("h = {:?}, g = {}, {} of {} grid points ok", config.h, config.g, fit.n_ok(), fit.grid.len());
    let mut header = data::role_names("x", d, "");
    header.extend(["m_hat", "eff_n", "flag"].map(String::from));
    let rows: Vec<Vec<String>> = (0..fit.grid.len())
        .map(|i| {
            let mut r: Vec<String> = fit.grid.row(i).iter().map(f64::to_string).collect();
            r.push(fmt_opt(fit.m_hat[i]));
            r.push(fit.eff_n[i].to_string());
            r.push(fit.flags[i].clone().unwrap_or_default());
            r
        })
        .collect();
    data::write_rows(cli.output.as_deref(), &header, &rows)?;
    write_plot(cli, "m_hat", &fit.grid, &fit.m_hat)
}

fn censored_cmd(cli: &Cli) -> Result<()> {
    input_or_dgp(cli, false)?;
    let (x, y) = match (&cli.input, &cli.dgp) {
        (Some(path), _) => data::load_censored(path)?,
        (None, Some(name)) => {
            let ExperimentDgp::Censored(d) = ExperimentDgp::reference(name)? else {
                return Err(Error::param(format!("{name} is not a censored design")));
            };
            let s = d.sample(single_n(cli)?, &mut sim::replication_rng(cli.seed.unwrap_or(0), 0, 0));
            if let Some(p) = &cli.save_sample {
                let mut header = data::role_names("x", s.x.dim(), "");
                header.push("y".into());
                let rows: Vec<Vec<String>> = (0..s.y.len())
                    .map(|i| {
                        let mut r: Vec<String> = s.x.row(i).iter().map(f64::to_string).collect();
                        r.push(s.y[i].to_string());
                        r
                    })
                    .collect();
                data::write_rows(Some(p), &header, &rows)?;
            }
            (s.x, s.y)
        }
        (None, None) => unreachable!("checked above"),
    };
    let p = x.dim();
    let q = cli.q.unwrap_or(1);
    let spec = bandwidth_spec(cli, (0.2, 0.3))?;
    let window = matches!(spec, BandwidthSpec::Rates { .. })
        .then_some((Application::Censored, WindowShape { p, q, d1: 0 }));
    let bw = resolve_bandwidths(&spec, y.len(), p, window)?;
    let mut config = CensoredConfig::new(q, bw.g, bw.h[0]);
    config.first_kernel = kernel(&cli.first_kernel)?;
    config.second_kernel = kernel(&cli.kernel)?;
    let grid = match grid_arg(cli, p)? {
        Some(g) => g,
        None if p == 1 => {
            let (lo, hi) = x.bounds()[0];
            let trim = cli.trim.unwrap_or(0.0) + bw.g / (hi - lo);
            generated::default_grid(lo, hi, trim.min(0.45), cli.grid_size.unwrap_or(DEFAULT_GRID_SIZE))
        }
        None => return Err(Error::param("--grid is required for more than one covariate")),
    };
    let fit = censored::fit_censored(&x, &y, &grid, &config)?;
    let avar = censored::censored_avar_plugin(&x, &y, &fit, &config)?;
    log::info!(
        "lambda = {}, {} of {} integration nodes clipped",
        fit.lambda,
        fit.clipped_nodes,
        fit.q_grid.len()
    );
    let mut header = data::role_names("x", p, "");
    header.extend(["mu_hat", "r_hat", "avar", "clipped_nodes", "flag"].map(String::from));
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let mut r: Vec<String> = grid.row(i).iter().map(f64::to_string).collect();
            r.push(fmt_opt(fit.mu_hat[i]));
            r.push(fmt_opt(fit.r_hat[i]));
            r.push(fmt_opt(avar[i]));
            r.push(fit.clipped_per_point[i].to_string());
            r.push(fit.flags[i].clone().unwrap_or_default());
            r
        })
        .collect();
    data::write_rows(cli.output.as_deref(), &header, &rows)?;
    write_plot(cli, "mu_hat", &grid, &fit.mu_hat)
}

fn triangular_cmd(cli: &Cli) -> Result<()> {
    input_or_dgp(cli, false)?;
    let sample = match (&cli.input, &cli.dgp) {
        (Some(path), _) => data::load_triangular(path)?,
        (None, Some(name)) => {
            let ExperimentDgp::Triangular(d) = ExperimentDgp::reference(name)? else {
                return Err(Error::param(format!("{name} is not a triangular design")));
            };
            let s = d.sample(single_n(cli)?, &mut sim::replication_rng(cli.seed.unwrap_or(0), 0, 0));
            if let Some(p) = &cli.save_sample {
                let mut header = vec!["y".to_string(), "x1".to_string()];
                header.extend(data::role_names("z1", s.z1.dim(), "_"));
                header.extend(data::role_names("z2", s.z2.dim(), "_"));
                let rows: Vec<Vec<String>> = (0..s.y.len())
                    .map(|i| {
                        let mut r = vec![s.y[i].to_string(), s.x1[i].to_string()];
                        r.extend(s.z1.row(i).iter().map(f64::to_string));
                        r.extend(s.z2.row(i).iter().map(f64::to_string));
                        r
                    })
                    .collect();
                data::write_rows(Some(p), &header, &rows)?;
            }
            data::TriangularData {
                y: s.y,
                x1: s.x1,
                z1: s.z1,
                z2: s.z2,
            }
        }
        (None, None) => unreachable!("checked above"),
    };
    let d1 = sample.z1.dim();
    let p = d1 + sample.z2.dim();
    let q = cli.q.unwrap_or(3);
    let spec = bandwidth_spec(cli, (0.2, 0.09))?;
    let window = matches!(spec, BandwidthSpec::Rates { .. })
        .then_some((Application::Triangular, WindowShape { p, q, d1 }));
    let bw = resolve_bandwidths(&spec, sample.y.len(), p, window)?;
    let mut config = TriangularConfig::new(q, bw.g, bw.h[0]);
    config.first_kernel = kernel(&cli.first_kernel)?;
    config.second_kernel = kernel(&cli.kernel)?;
    let grid = match grid_arg(cli, 1 + d1)? {
        Some(g) => g,
        None => {
            let median = |mut v: Vec<f64>| {
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            };
            let mut point = vec![median(sample.x1.clone())];
            point.extend((0..d1).map(|j| median(sample.z1.column(j))));
            Points::new(1 + d1, point)?
        }
    };
    let fit = triangular::fit_triangular(&sample.y, &sample.x1, &sample.z1, &sample.z2, &grid, &config)?;
    let avar = triangular::triangular_avar_plugin(&fit, &sample.y, &config)?;
    let mut header = vec!["x1".to_string()];
    header.extend(data::role_names("z1", d1, "_"));
    header.extend(["mu1_hat", "dropout", "avar", "flag"].map(String::from));
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let mut r: Vec<String> = grid.row(i).iter().map(f64::to_string).collect();
            r.push(fmt_opt(fit.mu1_hat[i]));
            r.push(fit.dropout[i].to_string());
            r.push(fmt_opt(avar[i]));
            r.push(fit.flags[i].clone().unwrap_or_default());
            r
        })
        .collect();
    data::write_rows(cli.output.as_deref(), &header, &rows)
}

/// Builds the experiment described by the options.
pub fn experiment(cli: &Cli) -> Result<Experiment> {
    if cli.input.is_some() {
        return Err(Error::param("simulate draws its own samples; --input is not accepted"));
    }
    let name = cli.dgp.as_deref().ok_or_else(|| Error::param("--dgp is required"))?;
    let design = ExperimentDgp::reference(name)?;
    let (estimator, q, defaults) = match &design {
        ExperimentDgp::Index(_) => (EstimatorKind::TwoStage, 1, (0.2, 0.25)),
        ExperimentDgp::Censored(_) => (EstimatorKind::Censored, 1, (0.2, 0.3)),
        ExperimentDgp::Triangular(_) => (EstimatorKind::Triangular, 3, (0.2, 0.09)),
    };
    let estimator = cli.estimator.as_deref().map_or(Ok(estimator), str::parse)?;
    let sample_sizes = args::parse_list::<usize>(
        "n",
        cli.n.as_deref().ok_or_else(|| Error::param("--n is required"))?,
    )?;
    let mut config = EstimatorConfig::new(cli.q.unwrap_or(q), bandwidth_spec(cli, defaults)?);
    config.kernel = kernel(&cli.kernel)?;
    config.first_kernel = kernel(&cli.first_kernel)?;
    config.trim = cli.trim.unwrap_or(0.0);
    config.expansion = cli.expansion;
    let eval_points = match grid_arg(cli, design.grid_dim())? {
        Some(g) => GridSpec::Explicit(g),
        None => GridSpec::Default {
            size: cli.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
        },
    };
    Ok(Experiment {
        dgp: design,
        estimator,
        sample_sizes,
        replications: cli.reps.unwrap_or(100),
        seed: cli.seed.unwrap_or(0),
        config,
        eval_points,
    })
}

fn simulate(cli: &Cli) -> Result<()> {
    let exp = experiment(cli)?;
    let report = sim::run_experiment(&exp)?;
    let out = cli.output.clone().unwrap_or_else(|| "report.csv".into());
    sim::write_report(&report, &out)?;
    log::info!(
        "report written to {} ({} rows) in {:.1} s",
        out.display(),
        report.rows.len(),
        report.metadata.wall_time_secs
    );
    if let Some(dir) = &cli.plot_dir {
        write_report_plots(&report, dir)?;
    }
    Ok(())
}

/// One `x value` file per sample size, estimator and statistic.
fn write_report_plots(report: &sim::MonteCarloReport, dir: &Path) -> Result<()> {
    if report.x_dim != 1 {
        log::warn!("plot files need a one-dimensional grid; skipping");
        return Ok(());
    }
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut keys: Vec<(usize, String, String)> = Vec::new();
    for r in report.rows.iter().filter(|r| !r.x.is_empty()) {
        let k = (r.n, r.estimator.clone(), r.stat.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (n, est, stat) in keys {
        let rows: Vec<&sim::ReportRow> = report
            .rows
            .iter()
            .filter(|r| r.n == n && r.estimator == est && r.stat == stat && !r.x.is_empty())
            .collect();
        let xs: Vec<f64> = rows.iter().map(|r| r.x[0]).collect();
        let vs: Vec<f64> = rows.iter().map(|r| r.value).collect();
        data::write_curve(&dir.join(format!("{est}_{stat}_n{n}.txt")), &xs, &vs)?;
    }
    Ok(())
}

fn rates(cli: &Cli) -> Result<()> {
    let list = |name: &str, v: &Option<String>| -> Result<Vec<f64>> {
        let text = v.as_deref().ok_or_else(|| Error::param(format!("--{name} is required")))?;
        args::parse_list(name, text)
    };
    let eta = list("eta", &cli.eta)?;
    let xi = match &cli.xi {
        Some(_) => list("xi", &cli.xi)?,
        None => vec![0.0; eta.len()],
    };
    let k = rate_kappa(&ComplexityParams {
        delta: list("delta", &cli.delta)?,
        alpha: list("alpha", &cli.alpha)?,
        xi,
        eta,
    })?;
    println!("kappa = {}", k.kappa);
    println!("kappa1 = {}", k.kappa1);
    println!("kappa2 = {}", k.kappa2);
    println!("kappa3 = {}", k.kappa3);
    Ok(())
}

fn window(cli: &Cli) -> Result<()> {
    let app: Application = cli
        .application
        .as_deref()
        .ok_or_else(|| Error::param("--application is required (censored or triangular)"))?
        .parse()?;
    let eta_text = cli.eta.as_deref().ok_or_else(|| Error::param("--eta is required"))?;
    let eta = match args::parse_list::<f64>("eta", eta_text)?.as_slice() {
        [e] => *e,
        _ => return Err(Error::param("--eta must be a single exponent here")),
    };
    let shape = WindowShape {
        p: cli.p.ok_or_else(|| Error::param("--p is required"))?,
        q: cli.q.unwrap_or(1),
        d1: cli.d1.unwrap_or(0),
    };
    let (lo, hi) = bandwidth_window(app, shape, eta)?;
    println!("theta_lower = {lo}");
    println!("theta_upper = {hi}");
    Ok(())
}
