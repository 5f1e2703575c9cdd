use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DroError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("transport plan entry ({row}, {col}) is negative")]
    NegativePlan { row: usize, col: usize },
    #[error("Gram matrix is not positive semidefinite (quadratic form {0})")]
    NotPsd(f64),
    #[error("objective diverged at iteration {iteration} (value {value})")]
    Diverged { iteration: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, DroError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> DroError {
    DroError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
