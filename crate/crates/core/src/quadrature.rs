//! Adaptive Simpson quadrature in one dimension and nested over boxes.

const INITIAL_PANELS: usize = 16;
const MAX_DEPTH: u32 = 32;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut into a fixed number of panels so that narrow
/// bumps are not missed by the coarsest Simpson estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, tol);
    }
    let width = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    let mut total = 0.0;
    for k in 0..INITIAL_PANELS {
        let lo = a + width * k as f64;
        let hi = if k + 1 == INITIAL_PANELS { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += refine(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, MAX_DEPTH);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates over `[a, b]` after splitting at the given interior break
/// points (kinks or support edges of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let mut knots: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.insert(0, a);
    knots.push(b);
    let share = tol / (knots.len() - 1) as f64;
    knots
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], share))
        .sum()
}

/// Tensor-product adaptive quadrature over an axis-aligned box. The first
/// coordinate is the outermost integral.
pub fn integrate_box<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], tol: f64) -> f64 {
    let mut prefix = Vec::with_capacity(bounds.len());
    nested(&f, bounds, tol, &mut prefix)
}

fn nested<F: Fn(&[f64]) -> f64>(
    f: &F,
    bounds: &[(f64, f64)],
    tol: f64,
    prefix: &mut Vec<f64>,
) -> f64 {
    match bounds {
        [] => f(prefix),
        [(a, b), rest @ ..] => {
            let inner_tol = if rest.is_empty() {
                tol
            } else {
                let volume: f64 = rest.iter().map(|(lo, hi)| (hi - lo).abs()).product();
                tol / volume.max(1.0)
            };
            let cell = std::cell::RefCell::new(std::mem::take(prefix));
            let value = integrate(
                |x| {
                    let mut p = cell.borrow().clone();
                    p.push(x);
                    nested(f, rest, inner_tol, &mut p)
                },
                *a,
                *b,
                tol,
            );
            *prefix = cell.into_inner();
            value
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(6), -1.0, 1.0, 1e-12);
        assert!((v - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory() {
        let v = integrate(|x| (10.0 * x).sin(), 0.0, 3.0, 1e-10);
        let exact = (1.0 - 30f64.cos()) / 10.0;
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn breaks_handle_kinks() {
        let v = integrate_with_breaks(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-12);
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn box_product() {
        let v = integrate_box(|p| p[0] * p[0] * p[1], &[(0.0, 1.0), (0.0, 2.0)], 1e-10);
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn reversed_interval_negates() {
        let a = integrate(|x| x.exp(), 0.0, 1.0, 1e-12);
        let b = integrate(|x| x.exp(), 1.0, 0.0, 1e-12);
        assert!((a + b).abs() < 1e-14);
    }
}
