//! Kernel regression on covariates estimated in a first nonparametric stage.
//!
//! The crate provides local polynomial smoothing in several dimensions, the
//! two-stage estimator that regresses an outcome on a first-stage fitted
//! index together with its asymptotic correction terms, two applications
//! built on it (censored regression and a triangular model with a control
//! function), and a deterministic Monte Carlo harness.

// `!(x > 0.0)` rejects NaN along with nonpositive values; indexed loops
// mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bandwidth;
pub mod censored;
pub mod density;
pub mod dgp;
pub mod error;
pub mod generated;
pub mod kernel;
pub mod linalg;
pub mod local_poly;
pub mod points;
pub mod quadrature;
pub mod sim;
pub mod triangular;

pub use error::{Error, ErrorCategory, Result};
pub use kernel::{KernelConstants, KernelSpec};
pub use local_poly::{EquivalentKernel, LocalFit, LocalPolyModel, MomentMatrices, MultiIndexBasis};
pub use points::{Dataset, Points};
