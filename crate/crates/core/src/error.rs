use thiserror::Error;

/// Errors produced by estimation, hashing, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value {value} at row {row}, column {col}")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("generator evaluated to {value} at omega_ij = {omega}")]
    NonFiniteGenerator { omega: f64, value: f64 },

    #[error("infeasible ensemble: {t} index values cannot cancel {d} bias terms (need T > d)")]
    Infeasible { t: usize, d: usize },

    #[error("weight system is ill-conditioned (condition estimate {condition:e})")]
    Conditioning { condition: f64 },

    #[error("mutual information is infinite for this family: {0}")]
    InfiniteMi(String),

    #[error("snapshot decode failed: {0}")]
    Decode(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
