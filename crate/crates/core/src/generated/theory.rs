//! Closed-form companions of the two-stage estimator: the rate bounds of
//! the main expansion, asymptotic bias and variances for one covariate,
//! and the one-dimensional weight kernels of the leading correction terms.

use crate::bandwidth::Regime;
use crate::dgp::{central_diff, DgpSpec};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::local_poly::{EquivalentKernel, MultiIndexBasis};
use crate::quadrature;

const QUAD_TOL: f64 = 1e-11;

/// Complexity description of the first stage, one entry per generated
/// covariate: uniform rate `delta_j`, entropy exponents `alpha_j`, `xi_j`,
/// and the second-stage bandwidth exponent `eta_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityParams {
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Supremal values of the three rate exponents and their minimum. Any
/// exponent strictly below `kappa` is achievable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaBounds {
    pub kappa: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

pub fn rate_kappa(params: &ComplexityParams) -> Result<KappaBounds> {
    let ComplexityParams {
        delta,
        alpha,
        xi,
        eta,
    } = params;
    let d = eta.len();
    if d == 0 {
        return Err(Error::param("complexity parameters are empty"));
    }
    for (name, v) in [("delta", delta), ("alpha", alpha), ("xi", xi)] {
        if v.len() != d {
            return Err(Error::param(format!(
                "{name} has {} entries but eta has {d}",
                v.len()
            )));
        }
    }
    for j in 0..d {
        if !(eta[j] > 0.0 && eta[j] < 1.0) {
            return Err(Error::param(format!("eta_{j} = {} must lie in (0, 1)", eta[j])));
        }
        if !(delta[j] > eta[j]) {
            return Err(Error::param(format!(
                "the first-stage uniform rate must exceed the bandwidth exponent: delta_{j} = {} <= eta_{j} = {}",
                delta[j], eta[j]
            )));
        }
        if !(alpha[j] > 0.0 && alpha[j] <= 2.0) {
            return Err(Error::param(format!(
                "entropy exponent alpha_{j} = {} must lie in (0, 2]",
                alpha[j]
            )));
        }
    }
    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let eta_plus: f64 = eta.iter().sum();
    let gap_min = min(&mut delta.iter().zip(eta).map(|(a, b)| a - b));
    let eta_min = min(&mut eta.iter().copied());
    let delta_min = min(&mut delta.iter().copied());
    let entropy_max = (0..d)
        .map(|j| delta[j] * alpha[j] + xi[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let kappa1 = 0.5 * (1.0 - eta_plus) + gap_min - 0.5 * entropy_max;
    let kappa2 = 2.0 * eta_min + gap_min;
    let kappa3 = delta_min + gap_min;
    Ok(KappaBounds {
        kappa: kappa1.min(kappa2).min(kappa3),
        kappa1,
        kappa2,
        kappa3,
    })
}

fn require_univariate(dgp: &DgpSpec, what: &str) -> Result<()> {
    if dgp.p() != 1 {
        return Err(Error::param(format!(
            "{what} is available for a single first-stage covariate (p = 1), dgp {} has p = {}",
            dgp.name,
            dgp.p()
        )));
    }
    Ok(())
}

/// Asymptotic bias `h^2 beta(x) / 2` of the real estimator with equal
/// bandwidths and local linear fits in both stages, where
/// `beta = mu2(K) m0'' - mu2(L) (r0''(phi) m0' - d/dx [r0''(phi) rho(phi)])`.
pub fn bias_cor2(
    dgp: &DgpSpec,
    x: f64,
    h: f64,
    second: KernelSpec,
    first: KernelSpec,
) -> Result<f64> {
    require_univariate(dgp, "the equal-bandwidth bias")?;
    let phi = |x: f64| dgp.phi(&[], x);
    let curvature = |x: f64| dgp.r0_dpp(&[phi(x)]);
    let rho_term = if dgp.has_rho() {
        central_diff(|x| curvature(x) * dgp.rho(&[phi(x)]), x)
    } else {
        0.0
    };
    let beta = second.moment(2) * dgp.m0_d2(x)
        - first.moment(2) * (curvature(x) * dgp.m0_d1(x) - rho_term);
    Ok(0.5 * beta * h * h)
}

fn linear_equivalent_kernel(first: KernelSpec) -> Result<EquivalentKernel> {
    EquivalentKernel::new(first, &MultiIndexBasis::new(1, 1)?)
}

/// `J~(v, x) = int K(v - r0'(phi(x)) u) L*(u) du`.
pub fn j_tilde(dgp: &DgpSpec, x: f64, v: f64, second: KernelSpec, lstar: &EquivalentKernel) -> f64 {
    let a = dgp.r0_dp(&[dgp.phi(&[], x)]);
    j_with_slope(a, v, second, lstar)
}

fn j_with_slope(a: f64, v: f64, second: KernelSpec, lstar: &EquivalentKernel) -> f64 {
    let breaks = [(v - 1.0) / a, (v + 1.0) / a];
    quadrature::integrate_with_breaks(
        |u| second.eval(v - a * u) * lstar.eval1(u),
        -1.0,
        1.0,
        &breaks,
        QUAD_TOL,
    )
}

/// `lambda~(x) = d/ds (rho f_S)(phi(x)) / (f_S r0')(phi(x))`.
fn lambda_tilde(dgp: &DgpSpec, x: f64) -> Result<f64> {
    if !dgp.has_rho() {
        return Ok(0.0);
    }
    let s = [dgp.phi(&[], x)];
    let slope = dgp.r0_dp(&s);
    if slope.abs() < 1e-10 {
        return Err(Error::DegenerateMonotonicity {
            point: s.to_vec(),
            value: slope,
        });
    }
    let f = dgp.f_s(&s);
    if f == 0.0 {
        return Ok(0.0);
    }
    Ok(dgp.rho_fs_dp(&s) / (f * slope))
}

/// `H~(t, x) = L*(t phi'(x)) lambda~(x)` with `t` on the index scale.
pub fn h_tilde_gamma(dgp: &DgpSpec, x: f64, t: f64, lstar: &EquivalentKernel) -> Result<f64> {
    require_univariate(dgp, "the equal-bandwidth gamma kernel")?;
    let lambda = lambda_tilde(dgp, x)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lstar.eval1(t * dgp.phi_dx(&[], x)) * lambda)
}

/// Asymptotic variance of `sqrt(n h) (m_hat(x) - m0(x) - bias)` in the given
/// bandwidth regime. `first` is the first-stage kernel (local linear).
pub fn avar_cor(
    dgp: &DgpSpec,
    x: f64,
    regime: Regime,
    second: KernelSpec,
    first: KernelSpec,
) -> Result<f64> {
    let f_r = dgp.f_r(x);
    if !(f_r >= 1e-8) {
        return Err(Error::NearBoundary { x, density: f_r });
    }
    let rk = second.constants().roughness;
    let var_eps = dgp.var_eps_given_r(x)?;
    match regime {
        Regime::GSlower => Ok(var_eps * rk / f_r),
        Regime::GFaster => {
            require_univariate(dgp, "the variance with a faster first stage")?;
            if dgp.has_rho() {
                return Err(Error::param(
                    "the variance with a faster first stage requires rho = 0 \
                     (otherwise the gamma term dominates)",
                ));
            }
            let m1 = dgp.m0_d1(x);
            let v = var_eps - 2.0 * m1 * dgp.cov_eps_zeta_given_r(x)?
                + m1 * m1 * dgp.var_zeta_given_r(x)?;
            Ok(v * rk / f_r)
        }
        Regime::EqualBw => {
            require_univariate(dgp, "the equal-bandwidth variance")?;
            let lstar = linear_equivalent_kernel(first)?;
            let a = dgp.r0_dp(&[dgp.phi(&[], x)]);
            let m1 = dgp.m0_d1(x);
            let lambda = lambda_tilde(dgp, x)?;
            let phi_dx = 1.0 / a;
            let combined = |t: f64| {
                m1 * j_with_slope(a, t, second, &lstar) - lstar.eval1(t * phi_dx) * lambda
            };
            let reach = 1.0 + a.abs();
            let breaks = [-1.0, 1.0, -a.abs(), a.abs()];
            let cov = dgp.cov_eps_zeta_given_r(x)?;
            let cross = if cov == 0.0 {
                0.0
            } else {
                quadrature::integrate_with_breaks(
                    |t| second.eval(t) * combined(t),
                    -1.0,
                    1.0,
                    &breaks,
                    1e-9,
                )
            };
            let var_zeta = dgp.var_zeta_given_r(x)?;
            let square = if var_zeta == 0.0 {
                0.0
            } else {
                quadrature::integrate_with_breaks(
                    |t| combined(t).powi(2),
                    -reach,
                    reach,
                    &breaks,
                    1e-9,
                )
            };
            Ok((var_eps * rk - 2.0 * cov * cross + var_zeta * square) / f_r)
        }
    }
}

/// Integral of `L*` over the level-set directions:
/// `int L*(s_{-p}, c + s_{-p} . grad_{-p} phi) ds_{-p}` with
/// `c = (phi(v_{-p}, x) - v_p) / g`.
fn level_set_weight(dgp: &DgpSpec, x: f64, v: &[f64], g: f64, lstar: &EquivalentKernel) -> f64 {
    let p = v.len();
    let v_minus = &v[..p - 1];
    let c = (dgp.phi(v_minus, x) - v[p - 1]) / g;
    if p == 1 {
        return lstar.eval1(c);
    }
    let grad = dgp.phi_dminus(v_minus, x);
    let bounds = vec![(-1.0, 1.0); p - 1];
    quadrature::integrate_box(
        |s| {
            let mut t = s.to_vec();
            t.push(c + s.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>());
            lstar.eval(&t)
        },
        &bounds,
        1e-9,
    )
}

fn check_weight_inputs(dgp: &DgpSpec, v: &[f64], g: f64, lstar: &EquivalentKernel) -> Result<()> {
    if v.len() != dgp.p() {
        return Err(Error::Dimension {
            expected: dgp.p(),
            got: v.len(),
        });
    }
    if lstar.weights().is_empty() || !(g > 0.0) {
        return Err(Error::param("weight kernels need g > 0"));
    }
    Ok(())
}

/// `H^Delta_g(x, v) = (d phi/dx / g) int L*(...) ds_{-p}`, the weight of the
/// first-stage errors in `Delta` when `g / h -> infinity`.
pub fn h_delta_kernel(dgp: &DgpSpec, x: f64, v: &[f64], g: f64, lstar: &EquivalentKernel) -> Result<f64> {
    check_weight_inputs(dgp, v, g, lstar)?;
    let p = v.len();
    let point = dgp.level_point(&v[..p - 1], x);
    let slope = dgp.r0_dp(&point);
    if slope.abs() < 1e-10 {
        return Err(Error::DegenerateMonotonicity { point, value: slope });
    }
    Ok(level_set_weight(dgp, x, v, g, lstar) / (slope * g))
}

/// `H^Gamma_g(x, v) = g^{-1} int L*(...) ds_{-p} * lambda(v_{-p}, x)` with
/// `lambda = d_p(rho f_S) / (f_S d_p r0)` on the level set. The Jacobian
/// determinant of the level-set parametrization is taken as one.
pub fn gamma_leading_kernel(
    dgp: &DgpSpec,
    x: f64,
    v: &[f64],
    g: f64,
    lstar: &EquivalentKernel,
) -> Result<f64> {
    check_weight_inputs(dgp, v, g, lstar)?;
    let p = v.len();
    let point = dgp.level_point(&v[..p - 1], x);
    let slope = dgp.r0_dp(&point);
    if slope.abs() < 1e-10 {
        return Err(Error::DegenerateMonotonicity { point, value: slope });
    }
    if !dgp.has_rho() {
        return Ok(0.0);
    }
    let f = dgp.f_s(&point);
    if f == 0.0 {
        return Ok(0.0);
    }
    let lambda = dgp.rho_fs_dp(&point) / (f * slope);
    Ok(level_set_weight(dgp, x, v, g, lstar) / g * lambda)
}

/// Weight of `zeta_i` in the leading term of `Delta` for the given regime:
/// `K_h(r0(s) - x)` when `g / h -> 0`, `J_h(x, s)` when `g = h` (one
/// covariate) and `H^Delta_g(x, s)` when `g / h -> infinity`.
#[allow(clippy::too_many_arguments)]
pub fn prop1_kernel(
    dgp: &DgpSpec,
    regime: Regime,
    x: f64,
    s: &[f64],
    h: f64,
    g: f64,
    second: KernelSpec,
    lstar: &EquivalentKernel,
) -> Result<f64> {
    if s.len() != dgp.p() {
        return Err(Error::Dimension {
            expected: dgp.p(),
            got: s.len(),
        });
    }
    match regime {
        Regime::GFaster => Ok(second.eval((dgp.r0(s) - x) / h) / h),
        Regime::EqualBw => {
            require_univariate(dgp, "the equal-bandwidth weight kernel")?;
            let a = dgp.r0_dp(s);
            let v = (dgp.r0(s) - x) / h;
            Ok(j_with_slope(a, v, second, lstar) / h)
        }
        Regime::GSlower => h_delta_kernel(dgp, x, s, g, lstar),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eta: f64, delta: f64, alpha: f64, xi: f64) -> ComplexityParams {
        ComplexityParams {
            delta: vec![delta],
            alpha: vec![alpha],
            xi: vec![xi],
            eta: vec![eta],
        }
    }

    #[test]
    fn kappa_hand_example() {
        let k = rate_kappa(&params(0.2, 0.4, 1.0, 0.0)).unwrap();
        assert!((k.kappa1 - 0.4).abs() < 1e-12);
        assert!((k.kappa2 - 0.6).abs() < 1e-12);
        assert!((k.kappa3 - 0.6).abs() < 1e-12);
        assert!((k.kappa - 0.4).abs() < 1e-12);
    }

    #[test]
    fn kappa_rejects_boundary() {
        assert!(rate_kappa(&params(0.2, 0.2, 1.0, 0.0)).is_err());
        assert!(rate_kappa(&params(0.2, 0.4, 2.5, 0.0)).is_err());
        assert!(rate_kappa(&params(0.2, 0.4, 0.0, 0.0)).is_err());
    }

    #[test]
    fn kappa_xi_monotone() {
        let a = rate_kappa(&params(0.2, 0.4, 1.0, 0.0)).unwrap();
        let b = rate_kappa(&params(0.2, 0.4, 1.0, 0.1)).unwrap();
        assert!(b.kappa1 < a.kappa1);
        assert_eq!(a.kappa2, b.kappa2);
        assert_eq!(a.kappa3, b.kappa3);
    }
}
