use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} outside range [{lo}, {hi})")]
    OutOfRange { value: i64, lo: i64, hi: i64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("insufficient history: need at least {required} {unit}, have {available}")]
    InsufficientHistory {
        required: usize,
        available: usize,
        unit: &'static str,
    },

    #[error("design matrix is rank deficient (column {column})")]
    Singular { column: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
