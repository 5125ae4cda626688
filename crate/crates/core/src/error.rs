use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {0} outside the supported range 2..=8")]
    UnsupportedDimension(usize),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(String),
    #[error("matrix is singular")]
    Singular,
    #[error("empty alphabet")]
    EmptyAlphabet,
    #[error("search budget exceeded after {examined} candidate sums (budget {budget})")]
    BudgetExceeded { examined: u64, budget: u64 },
    #[error("matrix is not hyperbolic (trace {0})")]
    NonHyperbolic(String),
    #[error("cone entry not reached within {0} steps")]
    NotWithinCap(usize),
    #[error("zero variance: sigma estimate {sigma:e} below threshold {threshold:e}")]
    ZeroVariance { sigma: f64, threshold: f64 },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("quadrature budget exceeded: {points} grid points (limit {limit})")]
    QuadratureBudget { points: u128, limit: u128 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
