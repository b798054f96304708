use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptySupport,
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {0}, cannot normalize")]
    DegenerateWeightSum(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("coupling problem of size {0} exceeds the 1e6 guard")]
    SizeGuardExceeded(usize),
    #[error("tensor sum needs {0} terms, above the 1e7 guard")]
    TensorGuardExceeded(f64),
    #[error("arity {arity} exceeds the limit {limit} for {op}")]
    ArityGuardExceeded { op: &'static str, arity: usize, limit: usize },
    #[error("no coefficients stored for degree {0}")]
    GridMissing(usize),
    #[error("grid mismatch at degree {0}")]
    GridMismatch(usize),
    #[error("far-field limit not reached: relative change {0:e}")]
    NotStabilized(f64),
    #[error("Vandermonde system ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("index {index} out of range for tuple of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("kernel support radius {support} exceeds ball radius {radius}")]
    SupportExceedsBall { support: f64, radius: f64 },
    #[error("kernel declares no bound on its second derivatives")]
    MissingHessianBound,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
}
