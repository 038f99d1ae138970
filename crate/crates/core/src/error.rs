use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
    Experiment,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("kernel {kernel} has smoothness order {available}; derivative of order {order} unsupported")]
    UnsupportedDerivative {
        kernel: &'static str,
        order: usize,
        available: usize,
    },

    #[error("singular local design at {point:?}: {effective_n} points in window, basis size {basis_size}")]
    SingularWindow {
        point: Vec<f64>,
        effective_n: usize,
        basis_size: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible bandwidth window: lower bound {lower} >= upper bound {upper} ({context})")]
    InfeasibleWindow {
        lower: f64,
        upper: f64,
        context: String,
    },

    #[error("index density f_R({x}) = {density} is below 1e-8; point too close to the support boundary")]
    NearBoundary { x: f64, density: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("missing model ingredient: {0}")]
    MissingIngredient(&'static str),

    #[error("degenerate censoring: {0}")]
    DegenerateCensoring(String),

    #[error("uncensored probability s0({x}) = {value} is below 1e-6")]
    HeavyCensoring { x: f64, value: f64 },

    #[error("derivative of r0 in its last argument is {value} at {point:?}; monotonicity fails")]
    DegenerateMonotonicity { point: Vec<f64>, value: f64 },

    #[error("support condition violated: {0}")]
    SupportCondition(String),

    #[error("degenerate covariate support: {0}")]
    DegenerateSupport(String),

    #[error("evaluation dropout {fraction:.3} exceeds the 10% limit at {point:?}")]
    DropoutExceeded { point: Vec<f64>, fraction: f64 },

    #[error("{failures} of {total} replications failed at n = {n} (limit 5%)")]
    FailureRateExceeded {
        n: usize,
        failures: usize,
        total: usize,
    },

    #[error("nonpositive metric value {value} at n = {n}; logarithm undefined")]
    NonPositiveMetric { n: usize, value: f64 },

    #[error("grid point {index}: {source}")]
    AtGridPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed input: {0}")]
    Format(String),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Dimension { .. }
            | Error::UnsupportedDerivative { .. }
            | Error::Parameter(_)
            | Error::InfeasibleWindow { .. }
            | Error::GridMismatch(_)
            | Error::MissingIngredient(_) => ErrorCategory::Config,
            Error::Io { .. } | Error::Format(_) | Error::DegenerateSupport(_) => {
                ErrorCategory::Data
            }
            Error::FailureRateExceeded { .. } => ErrorCategory::Experiment,
            Error::AtGridPoint { source, .. } => source.category(),
            _ => ErrorCategory::Numeric,
        }
    }
}
