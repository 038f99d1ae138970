//! Product-kernel density estimates.

use crate::kernel::KernelSpec;
use crate::points::Points;

/// `f_hat(at) = (1/n) sum_i K_h(X_i - at)`.
pub fn kde(sample: &Points, at: &[f64], h: &[f64], kernel: KernelSpec) -> f64 {
    let mut u = vec![0.0; at.len()];
    let total: f64 = sample
        .rows()
        .map(|r| {
            for (k, (a, b)) in r.iter().zip(at).enumerate() {
                u[k] = a - b;
            }
            kernel.product_unchecked(&u, h)
        })
        .sum();
    total / sample.len() as f64
}

/// Leave-one-out estimate at sample point `i`.
pub fn kde_loo(sample: &Points, i: usize, h: &[f64], kernel: KernelSpec) -> f64 {
    let at = sample.row(i);
    let n = sample.len();
    let own = kernel.product_unchecked(&vec![0.0; at.len()], h);
    (kde(sample, at, h, kernel) * n as f64 - own) / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_density() {
        let xs: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let pts = Points::from_column(xs);
        let f = kde(&pts, &[0.5], &[0.1], KernelSpec::Triweight);
        assert!((f - 1.0).abs() < 1e-2);
        let g = kde_loo(&pts, 500, &[0.1], KernelSpec::Triweight);
        assert!((g - 1.0).abs() < 2e-2);
    }
}
