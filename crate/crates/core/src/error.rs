use alloc::string::String;

/// Errors produced by the estimation and inference routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index set is not allowed for this norm: group {group} is split")]
    NotAllowedSet { group: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("precision row {0} was not estimated")]
    MissingRow(usize),

    #[error("degenerate variance estimate {0:e}")]
    DegenerateVariance(f64),

    #[error("approximate inverse certificate failed for row {row}: residual {residual:e} > bound {bound:e}")]
    Certificate { row: usize, residual: f64, bound: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
