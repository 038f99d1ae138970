use std::f64::consts::PI;

use gencov::bandwidth::Regime;
use gencov::dgp::{dgp_a, dgp_b};
use gencov::generated::{
    avar_cor, bias_cor2, delta_correction, expansion_residual, fit_pair, gamma_correction,
    CorrectionMode, TwoStageConfig,
};
use gencov::quadrature::{integrate, integrate_box};
use gencov::sim::generate_sample;
use gencov::{EquivalentKernel, KernelSpec, MultiIndexBasis};

const TRIWEIGHT_ROUGHNESS: f64 = 350.0 / 429.0;
const TRIWEIGHT_MU2: f64 = 1.0 / 9.0;

fn triweight(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        35.0 / 32.0 * (1.0 - u * u).powi(3)
    }
}

fn r0(s: f64) -> f64 {
    s + 0.1 * (2.0 * PI * s).sin()
}

fn r0_d1(s: f64) -> f64 {
    1.0 + 0.2 * PI * (2.0 * PI * s).cos()
}

fn phi(x: f64) -> f64 {
    let (mut lo, mut hi) = (-0.5, 1.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r0(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn m0_d1(x: f64) -> f64 {
    2.0 * (2.0 * x).cos() + 2.0 * x
}

fn m0_d2(x: f64) -> f64 {
    -4.0 * (2.0 * x).sin() + 2.0
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let step = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + step * i as f64);
    }
    sum * step / 3.0
}

#[test]
fn equivalent_kernel_reproduces_moments() {
    for kernel in [KernelSpec::Triweight, KernelSpec::Quartic] {
        for p in 1..=2 {
            for q in 0..=4 {
                let basis = MultiIndexBasis::new(p, q).unwrap();
                let lstar = EquivalentKernel::new(kernel, &basis).unwrap();
                for u in basis.indices() {
                    let moment = integrate_box(
                        |t| lstar.eval(t) * t.iter().zip(u).map(|(v, &k)| v.powi(k as i32)).product::<f64>(),
                        &vec![(-1.0, 1.0); p],
                        1e-10,
                    );
                    let target = if u.iter().all(|&k| k == 0) { 1.0 } else { 0.0 };
                    assert!((moment - target).abs() < 1e-6, "{kernel} p={p} q={q} {u:?}: {moment}");
                }
            }
        }
    }
}

#[test]
fn variance_with_slow_first_stage() {
    let dgp = dgp_a();
    for x in [0.3, 0.5, 0.7] {
        let f_r = 1.0 / r0_d1(phi(x));
        let expected = 0.25 * TRIWEIGHT_ROUGHNESS / f_r;
        let got = avar_cor(&dgp, x, Regime::GSlower, KernelSpec::Triweight, KernelSpec::Triweight).unwrap();
        assert!((got - expected).abs() < 1e-6 * expected, "{got} vs {expected}");
    }
}

#[test]
fn variance_with_fast_first_stage() {
    let dgp = dgp_a();
    for x in [0.3, 0.5, 0.7] {
        let f_r = 1.0 / r0_d1(phi(x));
        let expected = (0.25 + m0_d1(x).powi(2) * 0.09) * TRIWEIGHT_ROUGHNESS / f_r;
        let got = avar_cor(&dgp, x, Regime::GFaster, KernelSpec::Triweight, KernelSpec::Triweight).unwrap();
        assert!((got - expected).abs() < 1e-6 * expected, "{got} vs {expected}");
    }
    assert!(avar_cor(&dgp_b(), 0.5, Regime::GFaster, KernelSpec::Triweight, KernelSpec::Triweight).is_err());
}

#[test]
fn variance_with_equal_bandwidths() {
    let dgp = dgp_a();
    for x in [0.4, 0.6] {
        let a = r0_d1(phi(x));
        let f_r = 1.0 / a;
        // Split both integrals where the kernel supports start or end, so each
        // Simpson piece integrates a polynomial.
        let j = |v: f64| {
            let lo = (-1.0f64).max((v - 1.0) / a);
            let hi = 1.0f64.min((v + 1.0) / a);
            if hi <= lo {
                0.0
            } else {
                simpson(|u| triweight(v - a * u) * triweight(u), lo, hi, 200)
            }
        };
        let mut knots = [-1.0 - a, a - 1.0, 1.0 - a, 1.0 + a];
        knots.sort_by(f64::total_cmp);
        let j2: f64 = knots.windows(2).map(|w| simpson(|v| j(v).powi(2), w[0], w[1], 400)).sum();
        let expected = (0.25 * TRIWEIGHT_ROUGHNESS + 0.09 * m0_d1(x).powi(2) * j2) / f_r;
        let got = avar_cor(&dgp, x, Regime::EqualBw, KernelSpec::Triweight, KernelSpec::Triweight).unwrap();
        assert!((got - expected).abs() < 1e-6 * expected, "{got} vs {expected}");
        let slow = avar_cor(&dgp, x, Regime::GSlower, KernelSpec::Triweight, KernelSpec::Triweight).unwrap();
        assert!(got > slow);
    }
}

#[test]
fn equal_bandwidth_bias() {
    let dgp = dgp_a();
    let h = 0.1;
    for x in [0.3, 0.5, 0.7] {
        let s = phi(x);
        let r0_d2 = -0.4 * PI * PI * (2.0 * PI * s).sin();
        let expected = 0.5 * h * h * (TRIWEIGHT_MU2 * m0_d2(x) - TRIWEIGHT_MU2 * r0_d2 * m0_d1(x));
        let got = bias_cor2(&dgp, x, h, KernelSpec::Triweight, KernelSpec::Triweight).unwrap();
        assert!((got - expected).abs() < 1e-6 * (1e-3 + expected.abs()), "{got} vs {expected}");
    }
}

#[test]
fn kernel_constants_match_closed_forms() {
    let c = KernelSpec::Triweight.constants();
    assert!((c.roughness - TRIWEIGHT_ROUGHNESS).abs() < 1e-12);
    assert!((c.mu2 - TRIWEIGHT_MU2).abs() < 1e-12);
    let r = integrate(|u| triweight(u).powi(2), -1.0, 1.0, 1e-12);
    assert!((r - TRIWEIGHT_ROUGHNESS).abs() < 1e-10);
}

#[test]
fn corrections_agree_across_modes() {
    let dgp = dgp_a();
    let data = generate_sample(&dgp, 3000, 4);
    let config = TwoStageConfig::new(1, 0.12, 0.12).with_trim(0.15);
    let (real, _) = fit_pair(&data, &dgp, &config).unwrap();
    let emp = delta_correction(&real, &dgp, CorrectionMode::Empirical).unwrap();
    let pop = delta_correction(&real, &dgp, CorrectionMode::Population).unwrap();
    let scale = pop.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for (e, p) in emp.values.iter().zip(&pop.values) {
        assert!((e - p).abs() <= 0.5 * scale, "{e} vs {p}");
    }
    let gamma = gamma_correction(&real, &dgp, CorrectionMode::Empirical).unwrap();
    assert!(gamma.values.iter().all(|&v| v == 0.0));
}

#[test]
fn expansion_removes_most_of_the_gap() {
    let dgp = dgp_a();
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let data = generate_sample(&dgp, 4000, seed);
        let config = TwoStageConfig::new(1, 0.1, 0.1).with_trim(0.15);
        let (real, oracle) = fit_pair(&data, &dgp, &config).unwrap();
        let delta = delta_correction(&real, &dgp, CorrectionMode::Empirical).unwrap();
        let gamma = gamma_correction(&real, &dgp, CorrectionMode::Empirical).unwrap();
        let (res, raw) = expansion_residual(&real, &oracle, &delta.values, &gamma.values, &dgp).unwrap();
        ratios.push(res / raw);
    }
    ratios.sort_by(f64::total_cmp);
    assert!(ratios[2] < 0.6, "{ratios:?}");
}
