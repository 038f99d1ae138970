//! Log-log regression of an error metric on the sample size.

use crate::error::{Error, Result};

use super::report::MonteCarloReport;

#[derive(Debug, Clone, PartialEq)]
pub enum RateMetric {
    /// RMSE at the grid point with these coordinates.
    RmseAt(Vec<f64>),
    /// Mean over replications of the sup-norm error on the grid.
    SupError,
}

/// OLS slope of `log(metric)` on `log(n)` for one estimator, with its
/// standard error.
pub fn rate_regression(report: &MonteCarloReport, metric: &RateMetric, estimator: &str) -> Result<(f64, f64)> {
    let mut pts = Vec::new();
    for n in report.sample_sizes() {
        let value = match metric {
            RateMetric::RmseAt(x) => report.value_near(n, x, estimator, "rmse", 1e-12),
            RateMetric::SupError => report.value(n, &[], estimator, "mean_sup_error"),
        };
        let value = value.ok_or_else(|| {
            Error::Format(format!("no {metric:?} value for estimator {estimator} at n = {n}"))
        })?;
        pts.push((n, value));
    }
    log_log_slope(&pts)
}

/// Slope and standard error of `log(value)` regressed on `log(n)`.
pub fn log_log_slope(points: &[(usize, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::param(format!(
            "rate regression needs at least 3 sample sizes, got {}",
            points.len()
        )));
    }
    if let Some((n, v)) = points.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveMetric { n: *n, value: *v });
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::param("rate regression needs distinct sample sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (sse / (k - 2.0) / sxx).sqrt();
    Ok((slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, f64)> = [500, 1000, 2000, 4000]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powf(-0.4)))
            .collect();
        let (slope, se) = log_log_slope(&pts).unwrap();
        assert!((slope + 0.4).abs() < 1e-10);
        assert!(se < 1e-8);
    }

    #[test]
    fn constant_metric() {
        let pts = [(10, 2.0), (20, 2.0), (40, 2.0)];
        assert!(log_log_slope(&pts).unwrap().0.abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(matches!(
            log_log_slope(&[(10, 1.0), (20, 0.0), (40, 1.0)]),
            Err(Error::NonPositiveMetric { n: 20, .. })
        ));
        assert!(log_log_slope(&[(10, 1.0), (20, 1.0)]).is_err());
    }
}
