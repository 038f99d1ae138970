//! Monte Carlo report: long-format CSV body plus a TOML metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One statistic. Rows that do not refer to a grid point have empty `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub x: Vec<f64>,
    pub estimator: String,
    pub stat: String,
    pub value: f64,
    pub n_failures: usize,
}

/// Run description. Keys double as command-line options, so a sidecar can
/// be replayed as a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub command: String,
    pub dgp: String,
    pub estimator: String,
    pub n: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub q: usize,
    pub kernel: String,
    pub first_kernel: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub g: Option<f64>,
    pub trim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid: Option<String>,
    pub grid_size: usize,
    pub expansion: bool,
    pub version: String,
    pub wall_time_secs: f64,
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    /// Number of `x` columns.
    pub x_dim: usize,
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

impl MonteCarloReport {
    pub fn sample_sizes(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.dedup();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// First row matching exactly.
    pub fn row(&self, n: usize, x: &[f64], estimator: &str, stat: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.x == x && r.estimator == estimator && r.stat == stat)
    }

    pub fn value(&self, n: usize, x: &[f64], estimator: &str, stat: &str) -> Option<f64> {
        self.row(n, x, estimator, stat).map(|r| r.value)
    }

    /// Like [`value`](Self::value) with coordinates matched up to `tol`.
    pub fn value_near(&self, n: usize, x: &[f64], estimator: &str, stat: &str, tol: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.n == n
                    && r.estimator == estimator
                    && r.stat == stat
                    && r.x.len() == x.len()
                    && r.x.iter().zip(x).all(|(a, b)| (a - b).abs() <= tol)
            })
            .map(|r| r.value)
    }

    /// All values of a statistic in row order, e.g. per-replication rows.
    pub fn values(&self, n: usize, x: &[f64], estimator: &str, stat: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.x == x && r.estimator == estimator && r.stat == stat)
            .map(|r| r.value)
            .collect()
    }

    /// Distinct grid points reported at sample size `n`.
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for r in self.rows.iter().filter(|r| r.n == n && !r.x.is_empty()) {
            if !out.contains(&r.x) {
                out.push(r.x.clone());
            }
        }
        out
    }

    /// CSV body as written by [`write_report`].
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n".to_string()];
        header.extend(x_columns(self.x_dim));
        header.extend(["estimator", "stat", "value", "n_failures"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.n.to_string()];
            if r.x.is_empty() {
                rec.extend(std::iter::repeat_n(String::new(), self.x_dim));
            } else {
                if r.x.len() != self.x_dim {
                    return Err(Error::Dimension {
                        expected: self.x_dim,
                        got: r.x.len(),
                    });
                }
                rec.extend(r.x.iter().map(|v| v.to_string()));
            }
            rec.push(r.estimator.clone());
            rec.push(r.stat.clone());
            rec.push(r.value.to_string());
            rec.push(r.n_failures.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

fn x_columns(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".into()]
    } else {
        (1..=dim).map(|j| format!("x{j}")).collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Sidecar path for a report: the CSV path with extension `toml`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

pub fn write_report(report: &MonteCarloReport, path: &Path) -> Result<()> {
    let body = report.to_csv()?;
    fs::write(path, body).map_err(|e| io_err(path, e))?;
    let meta = toml::to_string(&report.metadata).map_err(|e| Error::Format(e.to_string()))?;
    let side = sidecar_path(path);
    fs::write(&side, meta).map_err(|e| io_err(&side, e))
}

pub fn read_report(path: &Path) -> Result<MonteCarloReport> {
    let side = sidecar_path(path);
    let meta = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    let metadata: ReportMetadata =
        toml::from_str(&meta).map_err(|e| io_err(&side, format!("malformed metadata: {e}")))?;
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if header.len() < 5 || header[0] != "n" {
        return Err(io_err(path, "report header must start with n"));
    }
    let x_dim = header.len() - 5;
    let mut expected = vec!["n".to_string()];
    expected.extend(x_columns(x_dim));
    expected.extend(["estimator", "stat", "value", "n_failures"].map(String::from));
    if header != expected {
        return Err(io_err(path, format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = i + 2;
        let num = |col: usize| -> Result<f64> {
            rec[col].parse::<f64>().map_err(|_| {
                io_err(path, format!("row {line}, column {}: not a number: '{}'", header[col], &rec[col]))
            })
        };
        let count = |col: usize| -> Result<usize> {
            rec[col].parse::<usize>().map_err(|_| {
                io_err(path, format!("row {line}, column {}: not a count: '{}'", header[col], &rec[col]))
            })
        };
        let x = if (1..=x_dim).all(|c| rec[c].is_empty()) {
            Vec::new()
        } else {
            (1..=x_dim).map(num).collect::<Result<Vec<f64>>>()?
        };
        rows.push(ReportRow {
            n: count(0)?,
            x,
            estimator: rec[x_dim + 1].to_string(),
            stat: rec[x_dim + 2].to_string(),
            value: num(x_dim + 3)?,
            n_failures: count(x_dim + 4)?,
        });
    }
    Ok(MonteCarloReport { x_dim, rows, metadata })
}
