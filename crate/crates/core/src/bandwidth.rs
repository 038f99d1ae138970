//! Bandwidths given absolutely or as rates `c n^{-exponent}`, and the
//! admissible first-stage exponent windows of the two applications.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Second-stage bandwidths `h` (one per generated covariate) and the shared
/// first-stage bandwidth `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidths {
    pub h: Vec<f64>,
    pub g: f64,
    /// Exponents `(eta, theta)` when resolved from rates.
    pub rates: Option<RateExponents>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateExponents {
    pub eta: Vec<f64>,
    pub theta: f64,
}

/// How bandwidths are specified. Exactly one form is allowed per run.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthSpec {
    Absolute { h: Vec<f64>, g: f64 },
    Rates {
        eta: Vec<f64>,
        theta: f64,
        c_h: f64,
        c_g: f64,
    },
}

/// Relative size of the two bandwidths, which selects the variance formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `g = h`.
    EqualBw,
    /// `g / h -> 0`.
    GFaster,
    /// `g / h -> infinity`.
    GSlower,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::EqualBw => "equal_bw",
            Regime::GFaster => "g_faster",
            Regime::GSlower => "g_slower",
        }
    }

    /// Regime implied by the exponents `eta` (second stage) and `theta`.
    pub fn from_exponents(eta: f64, theta: f64) -> Self {
        if (eta - theta).abs() < 1e-12 {
            Regime::EqualBw
        } else if theta > eta {
            Regime::GFaster
        } else {
            Regime::GSlower
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_bw" => Ok(Regime::EqualBw),
            "g_faster" => Ok(Regime::GFaster),
            "g_slower" => Ok(Regime::GSlower),
            other => Err(Error::param(format!(
                "unknown regime '{other}' (expected equal_bw, g_faster or g_slower)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Application {
    Censored,
    Triangular,
}

impl FromStr for Application {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "censored" => Ok(Application::Censored),
            "triangular" => Ok(Application::Triangular),
            other => Err(Error::param(format!(
                "unknown application '{other}' (expected censored or triangular)"
            ))),
        }
    }
}

/// Dimensions entering the window formulas. `p` is the first-stage
/// covariate dimension, `q` the first-stage order and `d1` the number of
/// included exogenous covariates (triangular model only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowShape {
    pub p: usize,
    pub q: usize,
    pub d1: usize,
}

/// Open interval of admissible first-stage exponents `theta` for a given
/// second-stage exponent `eta`.
pub fn bandwidth_window(app: Application, shape: WindowShape, eta: f64) -> Result<(f64, f64)> {
    let WindowShape { p, q, d1 } = shape;
    if p == 0 {
        return Err(Error::param("window needs p >= 1"));
    }
    let (p, q, d1f) = (p as f64, q as f64, d1 as f64);
    let (lower, upper, context) = match app {
        Application::Censored => {
            let upper = (1.0 - 3.0 * eta) / p;
            let lower = ((1.0 - 4.0 * eta) / p).max(1.0 / (2.0 * (q + 1.0) + p));
            (lower, upper, "censored regression first-stage exponent")
        }
        Application::Triangular => {
            let lo_eta = (1.0 / (5.0 + d1f)).max(1.0 / (2.0 * p + 3.0));
            let hi_eta = 1.0 / (1.0 + d1f);
            if !(eta > lo_eta && eta < hi_eta) {
                return Err(Error::param(format!(
                    "triangular model needs the second-stage exponent in ({lo_eta}, {hi_eta}), got {eta}"
                )));
            }
            let upper = (1.0 - 3.0 * eta) / (2.0 * p);
            let lower = (1.0 - eta * (d1f + 1.0)) / (2.0 * (q + 1.0));
            (lower, upper, "triangular model first-stage exponent")
        }
    };
    if lower >= upper {
        return Err(Error::InfeasibleWindow {
            lower,
            upper,
            context: context.to_string(),
        });
    }
    Ok((lower, upper))
}

/// Resolves a bandwidth specification at sample size `n` for a first stage
/// in `p` dimensions. When `window` is given, `theta` must lie strictly
/// inside the application's window.
pub fn resolve_bandwidths(
    spec: &BandwidthSpec,
    n: usize,
    p: usize,
    window: Option<(Application, WindowShape)>,
) -> Result<Bandwidths> {
    match spec {
        BandwidthSpec::Absolute { h, g } => {
            if h.is_empty() {
                return Err(Error::param("at least one second-stage bandwidth is required"));
            }
            if let Some(b) = h.iter().chain(std::iter::once(g)).find(|b| !(**b > 0.0 && b.is_finite())) {
                return Err(Error::param(format!("bandwidths must be positive, got {b}")));
            }
            Ok(Bandwidths {
                h: h.clone(),
                g: *g,
                rates: None,
            })
        }
        BandwidthSpec::Rates {
            eta,
            theta,
            c_h,
            c_g,
        } => {
            if !(*c_h > 0.0 && *c_g > 0.0) {
                return Err(Error::param(format!(
                    "bandwidth constants must be positive, got c_h = {c_h}, c_g = {c_g}"
                )));
            }
            if eta.is_empty() {
                return Err(Error::param("at least one second-stage exponent is required"));
            }
            if let Some(e) = eta.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                return Err(Error::param(format!(
                    "second-stage exponent must lie in (0, 1), got {e}"
                )));
            }
            let eta_plus: f64 = eta.iter().sum();
            if eta_plus >= 1.0 {
                return Err(Error::param(format!(
                    "sum of second-stage exponents must be below 1, got {eta_plus}"
                )));
            }
            let p_f = p.max(1) as f64;
            if !(*theta > 0.0 && *theta < 1.0 / p_f) {
                return Err(Error::param(format!(
                    "first-stage exponent must lie in (0, 1/p) = (0, {}), got {theta}",
                    1.0 / p_f
                )));
            }
            if let Some((app, shape)) = window {
                let (lo, hi) = bandwidth_window(app, shape, eta[0])?;
                if !(*theta > lo && *theta < hi) {
                    return Err(Error::param(format!(
                        "first-stage exponent {theta} lies outside the admissible window ({lo}, {hi})"
                    )));
                }
            }
            let nf = n as f64;
            Ok(Bandwidths {
                h: eta.iter().map(|e| c_h * nf.powf(-e)).collect(),
                g: c_g * nf.powf(-theta),
                rates: Some(RateExponents {
                    eta: eta.clone(),
                    theta: *theta,
                }),
            })
        }
    }
}

impl Bandwidths {
    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    /// Regime from the exponents, or from the bandwidth values when given
    /// absolutely.
    pub fn regime(&self) -> Regime {
        match &self.rates {
            Some(r) => Regime::from_exponents(r.eta[0], r.theta),
            None => {
                let h = self.h[0];
                if (self.g - h).abs() <= 1e-12 * h {
                    Regime::EqualBw
                } else if self.g < h {
                    Regime::GFaster
                } else {
                    Regime::GSlower
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(eta: f64, theta: f64) -> BandwidthSpec {
        BandwidthSpec::Rates {
            eta: vec![eta],
            theta,
            c_h: 1.0,
            c_g: 1.0,
        }
    }

    #[test]
    fn resolves_rates() {
        let b = resolve_bandwidths(&rates(0.2, 0.25), 1000, 1, None).unwrap();
        assert!((b.h[0] - 0.251188643150958).abs() < 1e-12);
        assert_eq!(b.regime(), Regime::GFaster);
    }

    #[test]
    fn rejects_bad_exponents() {
        let spec = BandwidthSpec::Rates {
            eta: vec![0.6, 0.5],
            theta: 0.2,
            c_h: 1.0,
            c_g: 1.0,
        };
        assert!(resolve_bandwidths(&spec, 100, 1, None).is_err());
        assert!(resolve_bandwidths(&rates(0.2, 0.6), 100, 2, None).is_err());
        assert!(resolve_bandwidths(&rates(0.2, 0.0), 100, 1, None).is_err());
    }

    #[test]
    fn censored_window_examples() {
        let shape = WindowShape { p: 1, q: 1, d1: 0 };
        let (lo, hi) = bandwidth_window(Application::Censored, shape, 0.2).unwrap();
        assert!((lo - 0.2).abs() < 1e-12 && (hi - 0.4).abs() < 1e-12);
        let shape = WindowShape { p: 4, q: 1, d1: 0 };
        match bandwidth_window(Application::Censored, shape, 0.2) {
            Err(Error::InfeasibleWindow { lower, upper, .. }) => {
                assert!((lower - 1.0 / 8.0).abs() < 1e-12);
                assert!((upper - 0.1).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let ok = resolve_bandwidths(
            &rates(0.2, 0.3),
            500,
            1,
            Some((Application::Censored, WindowShape { p: 1, q: 1, d1: 0 })),
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn triangular_window_example() {
        let shape = WindowShape { p: 2, q: 3, d1: 1 };
        let (lo, hi) = bandwidth_window(Application::Triangular, shape, 0.2).unwrap();
        assert!((lo - 0.075).abs() < 1e-12 && (hi - 0.1).abs() < 1e-12);
        assert!(bandwidth_window(Application::Triangular, shape, 0.1).is_err());
    }
}
