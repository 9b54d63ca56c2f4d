use thiserror::Error;

/// Errors surfaced by fitting, scoring and inference operations.
#[derive(Debug, Error)]
pub enum TdaError {
    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("optimizer did not converge within {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("all markers missing for the scored observation")]
    AllMissing,

    #[error("empty marker subset")]
    EmptySubset,

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("log-likelihood ratio is linear; no quadratic-form score distribution exists")]
    DegenerateToLinear,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("quantile bracket expansion exceeded 60 doublings")]
    BracketFailure,

    #[error("singular covariance matrix")]
    SingularCovariance,

    #[error("too many markers for exhaustive enumeration: J = {0} > 25")]
    TooManyMarkers(usize),

    #[error("too many failed bootstrap refits: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TdaError>;
