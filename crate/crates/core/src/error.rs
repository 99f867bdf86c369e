use thiserror::Error;

/// Errors raised by the numerical core and the run orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid nonlinearity: {0}")]
    InvalidBeta(String),
    #[error("smooth point: {0} is not a breakpoint")]
    SmoothPoint(f64),
    #[error("field length {got} does not match grid size {expected}")]
    FieldSize { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("dense Gram too large: {0} nodes outside E (limit 100000)")]
    GramTooLarge(usize),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
