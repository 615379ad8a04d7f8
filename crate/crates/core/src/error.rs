use thiserror::Error;

/// Errors raised by the transport library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside the reference domain: {0}")]
    Domain(String),

    #[error("index set of size {size} exceeds the configured cap {cap}")]
    SizeLimit { size: usize, cap: usize },

    #[error("invalid interval [{a}, {b}]")]
    Interval { a: f64, b: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate fit: trace(A) = {0:e}")]
    DegenerateFit(f64),

    #[error("conic encoding failed at sample indices {indices:?}: {reason}")]
    Encoding { indices: Vec<usize>, reason: String },

    #[error("scheduler failure: {0}")]
    Schedule(String),

    #[error("preprocessing failure: {0}")]
    Preprocess(String),

    #[error("degenerate importance weights")]
    DegenerateWeights,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid field `{field}`: {msg}")]
    InvalidField { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
