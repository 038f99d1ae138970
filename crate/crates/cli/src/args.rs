//! Command-line options and configuration files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, ValueEnum};
use gencov::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Two-stage estimator on a sample.
    Fit,
    /// Estimator with the true index of a reference design.
    OracleFit,
    /// Censored regression.
    Censored,
    /// Triangular model with a control function.
    Triangular,
    /// Monte Carlo experiment.
    Simulate,
    /// Rate exponents of the expansion remainder.
    Rates,
    /// Admissible first-stage bandwidth exponents.
    Window,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "gencov",
    version,
    about = "Kernel regression on covariates estimated in a first nonparametric stage",
    args_override_self = true
)]
pub struct Cli {
    /// Command to run; may also come from the configuration file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Flat TOML file with option values; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output CSV (a TOML sidecar is written next to simulation reports).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Reference design: dgp-a, dgp-b, dgp-c, censored-a or triangular-a.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Simulation estimator: two_stage, oracle, censored or triangular.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Order of the first-stage local polynomial.
    #[arg(long)]
    pub q: Option<usize>,
    /// Second-stage bandwidth exponent(s), comma separated.
    #[arg(long)]
    pub eta: Option<String>,
    /// First-stage bandwidth exponent.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Constant in h = c_h n^(-eta).
    #[arg(long)]
    pub c_h: Option<f64>,
    /// Constant in g = c_g n^(-theta).
    #[arg(long)]
    pub c_g: Option<f64>,
    /// Absolute second-stage bandwidth.
    #[arg(long)]
    pub h: Option<f64>,
    /// Absolute first-stage bandwidth.
    #[arg(long)]
    pub g: Option<f64>,
    /// Second-stage kernel: triweight, quartic or epanechnikov.
    #[arg(long)]
    pub kernel: Option<String>,
    /// First-stage kernel.
    #[arg(long)]
    pub first_kernel: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications per sample size.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Sample size(s), comma separated.
    #[arg(long)]
    pub n: Option<String>,
    /// Evaluation points: comma separated values, rows separated by ';'.
    #[arg(long)]
    pub grid: Option<String>,
    /// Number of points of the default grid.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Fraction of the support trimmed on each side of the default grid.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Record expansion residuals in two-stage simulations.
    #[arg(long)]
    pub expansion: bool,
    /// Uniform first-stage rate exponent(s) for `rates`.
    #[arg(long)]
    pub delta: Option<String>,
    /// Entropy exponent(s) for `rates`.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Entropy growth exponent(s) for `rates`.
    #[arg(long)]
    pub xi: Option<String>,
    /// Application for `window`: censored or triangular.
    #[arg(long)]
    pub application: Option<String>,
    /// First-stage covariate dimension for `window`.
    #[arg(long)]
    pub p: Option<usize>,
    /// Included exogenous covariates for `window`.
    #[arg(long)]
    pub d1: Option<usize>,
    /// Directory for two-column plot files.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    /// Write the simulated sample to this CSV.
    #[arg(long)]
    pub save_sample: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, action = ArgAction::Count)]
    pub verbose: u8,
}

/// Sidecar keys that describe a run rather than configure it.
const IGNORED_KEYS: [&str; 3] = ["version", "wall_time_secs", "created_unix"];

/// Parses arguments, merging a configuration file when `--config` is given.
pub fn parse<I, T>(args: I) -> std::result::Result<Cli, ParseFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let first = Cli::try_parse_from(&args).map_err(ParseFailure::Clap)?;
    let Some(path) = first.config.clone() else {
        return Ok(first);
    };
    let (command, flags) = config_flags(&path).map_err(ParseFailure::Config)?;
    let mut merged: Vec<OsString> = vec![args.first().cloned().unwrap_or_else(|| "gencov".into())];
    if first.command.is_none() {
        if let Some(c) = command {
            merged.push(c.into());
        }
    }
    merged.extend(flags.into_iter().map(OsString::from));
    merged.extend(args.into_iter().skip(1));
    Cli::try_parse_from(merged).map_err(ParseFailure::Clap)
}

#[derive(Debug)]
pub enum ParseFailure {
    Clap(clap::Error),
    Config(Error),
}

fn config_flags(path: &Path) -> Result<(Option<String>, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Error::param(format!("{}: malformed configuration: {e}", path.display())))?;
    let mut command = None;
    let mut flags = Vec::new();
    for (key, value) in table {
        if IGNORED_KEYS.contains(&key.as_str()) {
            continue;
        }
        if key == "command" {
            command = Some(scalar(&key, &value)?);
            continue;
        }
        if key == "config" {
            return Err(Error::param("configuration files cannot include other files"));
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => flags.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let parts = items.iter().map(|v| scalar(&key, v)).collect::<Result<Vec<_>>>()?;
                flags.push(format!("{flag}={}", parts.join(",")));
            }
            other => flags.push(format!("{flag}={}", scalar(&key, &other)?)),
        }
    }
    Ok((command, flags))
}

fn scalar(key: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        _ => Err(Error::param(format!("configuration key '{key}' must be a scalar or a list of scalars"))),
    }
}

/// Comma-separated list of values.
pub fn parse_list<T: std::str::FromStr>(name: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::param(format!("--{name}: cannot parse '{s}'")))
        })
        .collect()
}
