use thiserror::Error;

/// Errors produced by model construction, filtering and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument violates its domain (non-positive mass,
    /// mismatched lengths, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numerical routine failed (singular system, non-finite values,
    /// divergent iteration).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
