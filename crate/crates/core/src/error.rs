use thiserror::Error;

/// Errors produced by state construction, protocol steps and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate marginal on qubit {qubit}: P0 = {p0}, P1 = {p1}")]
    DegenerateMarginal { qubit: usize, p0: f64, p1: f64 },

    #[error("out of supported range: {0}")]
    OutOfRange(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numerical check failed: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}
