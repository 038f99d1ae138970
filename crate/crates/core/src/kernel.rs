//! Compactly supported univariate kernels and their product extensions.
//!
//! | Kernel       | k(u) on \[-1, 1\]       | smooth on R | mu2   | R(k)    |
//! |--------------|-------------------------|-------------|-------|---------|
//! | triweight    | 35/32 (1 - u^2)^3       | C^2         | 1/9   | 350/429 |
//! | quartic      | 15/16 (1 - u^2)^2       | C^1         | 1/7   | 5/7     |
//! | epanechnikov | 3/4 (1 - u^2)           | C^0         | 1/5   | 3/5     |
//!
//! Every kernel is exactly zero for `|u| >= 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelSpec {
    #[default]
    Triweight,
    Quartic,
    Epanechnikov,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 3] = [
        KernelSpec::Triweight,
        KernelSpec::Quartic,
        KernelSpec::Epanechnikov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Triweight => "triweight",
            KernelSpec::Quartic => "quartic",
            KernelSpec::Epanechnikov => "epanechnikov",
        }
    }

    pub fn support_radius(self) -> f64 {
        1.0
    }

    /// Highest derivative order that is continuous on the whole real line.
    pub fn smoothness_order(self) -> usize {
        match self {
            KernelSpec::Triweight => 2,
            KernelSpec::Quartic => 1,
            KernelSpec::Epanechnikov => 0,
        }
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = 1.0 - u * u;
        if a <= 0.0 {
            return 0.0;
        }
        match self {
            KernelSpec::Triweight => 35.0 / 32.0 * a * a * a,
            KernelSpec::Quartic => 15.0 / 16.0 * a * a,
            KernelSpec::Epanechnikov => 0.75 * a,
        }
    }

    /// `order`-th derivative of the kernel (1 or 2).
    pub fn derivative(self, u: f64, order: usize) -> Result<f64> {
        if order == 0 {
            return Ok(self.eval(u));
        }
        if order > 2 || order > self.smoothness_order() {
            return Err(Error::UnsupportedDerivative {
                kernel: self.name(),
                order,
                available: self.smoothness_order(),
            });
        }
        Ok(self.derivative_unchecked(u, order))
    }

    #[inline]
    pub(crate) fn derivative_unchecked(self, u: f64, order: usize) -> f64 {
        let a = 1.0 - u * u;
        if a <= 0.0 {
            return 0.0;
        }
        match (self, order) {
            (KernelSpec::Triweight, 1) => -35.0 / 32.0 * 6.0 * u * a * a,
            (KernelSpec::Triweight, 2) => 35.0 / 32.0 * (-6.0 * a * a + 24.0 * u * u * a),
            (KernelSpec::Quartic, 1) => -15.0 / 16.0 * 4.0 * u * a,
            (KernelSpec::Quartic, 2) => 15.0 / 16.0 * (12.0 * u * u - 4.0),
            (KernelSpec::Epanechnikov, 1) => -1.5 * u,
            (KernelSpec::Epanechnikov, 2) => -1.5,
            _ => 0.0,
        }
    }

    /// `K_h(u) = prod_j k(u_j / h_j) / h_j`.
    pub fn product(self, u: &[f64], h: &[f64]) -> Result<f64> {
        check_dims(u, h)?;
        Ok(self.product_unchecked(u, h))
    }

    #[inline]
    pub(crate) fn product_unchecked(self, u: &[f64], h: &[f64]) -> f64 {
        let mut w = 1.0;
        for (&uj, &hj) in u.iter().zip(h) {
            w *= self.eval(uj / hj) / hj;
            if w == 0.0 {
                return 0.0;
            }
        }
        w
    }

    /// Gradient of the product kernel: entry `j` is
    /// `k'(u_j/h_j)/h_j^2 * prod_{i != j} k(u_i/h_i)/h_i`.
    pub fn product_gradient(self, u: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        check_dims(u, h)?;
        if self.smoothness_order() < 1 {
            return Err(Error::UnsupportedDerivative {
                kernel: self.name(),
                order: 1,
                available: 0,
            });
        }
        Ok(self.product_gradient_unchecked(u, h))
    }

    pub(crate) fn product_gradient_unchecked(self, u: &[f64], h: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = u
            .iter()
            .zip(h)
            .map(|(&uj, &hj)| self.eval(uj / hj) / hj)
            .collect();
        (0..u.len())
            .map(|j| {
                let dj = self.derivative_unchecked(u[j] / h[j], 1) / (h[j] * h[j]);
                vals.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .fold(dj, |acc, (_, v)| acc * v)
            })
            .collect()
    }

    /// `(mu2, R(k))` = `(int u^2 k(u) du, int k(u)^2 du)` by adaptive quadrature.
    pub fn constants(self) -> KernelConstants {
        KernelConstants {
            mu2: self.moment(2),
            roughness: quadrature::integrate(|u| self.eval(u).powi(2), -1.0, 1.0, QUAD_TOL),
        }
    }

    /// `int u^j k(u) du` by adaptive quadrature.
    pub fn moment(self, j: usize) -> f64 {
        if j % 2 == 1 {
            return 0.0;
        }
        quadrature::integrate(|u| u.powi(j as i32) * self.eval(u), -1.0, 1.0, QUAD_TOL)
    }

    /// `int k(u) du`; equals one up to quadrature error.
    pub fn mass(self) -> f64 {
        quadrature::integrate(|u| self.eval(u), -1.0, 1.0, QUAD_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub mu2: f64,
    pub roughness: f64,
}

fn check_dims(u: &[f64], h: &[f64]) -> Result<()> {
    if u.len() != h.len() {
        return Err(Error::Dimension {
            expected: h.len(),
            got: u.len(),
        });
    }
    if let Some(bad) = h.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::param(format!("bandwidth must be positive, got {bad}")));
    }
    Ok(())
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triweight" => Ok(KernelSpec::Triweight),
            "quartic" | "biweight" => Ok(KernelSpec::Quartic),
            "epanechnikov" => Ok(KernelSpec::Epanechnikov),
            other => Err(Error::param(format!(
                "unknown kernel '{other}' (expected triweight, quartic or epanechnikov)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
        (f(x + step) - f(x - step)) / (2.0 * step)
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(KernelSpec::Triweight.eval(0.0), 1.09375);
        assert_eq!(KernelSpec::Triweight.eval(1.5), 0.0);
        assert_eq!(KernelSpec::Triweight.eval(1.0), 0.0);
        assert!((KernelSpec::Epanechnikov.eval(0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn normalization_and_symmetry() {
        for k in KernelSpec::ALL {
            assert!((k.mass() - 1.0).abs() < 1e-10, "{k}");
            for i in 0..=1000 {
                let u = -1.2 + 2.4 * i as f64 / 1000.0;
                assert_eq!(k.eval(u), k.eval(-u));
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let k = KernelSpec::Triweight;
        assert_eq!(k.derivative(0.0, 1).unwrap(), 0.0);
        assert_eq!(k.derivative(1.0, 1).unwrap(), 0.0);
        let d = k.derivative(0.3, 1).unwrap();
        assert!((d - fd(|u| k.eval(u), 0.3, 1e-5)).abs() < 1e-6);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for k in [KernelSpec::Triweight, KernelSpec::Quartic] {
            for i in 1..40 {
                let u = -0.975 + 1.95 * i as f64 / 40.0;
                let d1 = k.derivative(u, 1).unwrap();
                assert!((d1 - fd(|v| k.eval(v), u, 1e-5)).abs() < 1e-6);
            }
        }
        let k = KernelSpec::Triweight;
        for i in 1..40 {
            let u = -0.975 + 1.95 * i as f64 / 40.0;
            let d2 = k.derivative(u, 2).unwrap();
            let fd2 = fd(|v| k.derivative(v, 1).unwrap(), u, 1e-5);
            assert!((d2 - fd2).abs() < 1e-6);
        }
    }

    #[test]
    fn unsupported_orders() {
        assert!(matches!(
            KernelSpec::Epanechnikov.derivative(0.1, 1),
            Err(Error::UnsupportedDerivative { .. })
        ));
        assert!(KernelSpec::Quartic.derivative(0.1, 2).is_err());
        assert!(KernelSpec::Triweight.derivative(0.1, 3).is_err());
    }

    #[test]
    fn triweight_second_derivative_vanishes_at_edges() {
        let k = KernelSpec::Triweight;
        for eps in [1e-3, 1e-5, 1e-7] {
            assert!(k.derivative(1.0 - eps, 2).unwrap().abs() < 300.0 * eps);
            assert!(k.derivative(-1.0 + eps, 2).unwrap().abs() < 300.0 * eps);
        }
    }

    #[test]
    fn constants_match_closed_forms() {
        let t = KernelSpec::Triweight.constants();
        assert!((t.mu2 - 1.0 / 9.0).abs() < 1e-8);
        assert!((t.roughness - 350.0 / 429.0).abs() < 1e-8);
        let e = KernelSpec::Epanechnikov.constants();
        assert!((e.mu2 - 0.2).abs() < 1e-8);
        assert!((e.roughness - 0.6).abs() < 1e-8);
        let q = KernelSpec::Quartic.constants();
        assert!((q.mu2 - 1.0 / 7.0).abs() < 1e-8);
        assert!((q.roughness - 5.0 / 7.0).abs() < 1e-8);
    }

    #[test]
    fn product_kernel_examples() {
        let k = KernelSpec::Triweight;
        let v = k.product(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 1.196289).abs() < 1e-6);
        assert_eq!(k.product(&[2.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(k.product(&[0.2], &[0.5]).unwrap(), k.eval(0.4) / 0.5);
        assert!(matches!(
            k.product(&[0.2], &[0.5, 1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn product_gradient_examples() {
        let k = KernelSpec::Triweight;
        assert_eq!(k.product_gradient(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let g = k.product_gradient(&[0.3], &[1.0]).unwrap();
        assert_eq!(g[0], k.derivative(0.3, 1).unwrap());
        assert!(KernelSpec::Epanechnikov
            .product_gradient(&[0.0], &[1.0])
            .is_err());
    }

    #[test]
    fn parse_names() {
        for k in KernelSpec::ALL {
            assert_eq!(k.name().parse::<KernelSpec>().unwrap(), k);
        }
        assert!("gaussian".parse::<KernelSpec>().is_err());
    }
}
