use thiserror::Error;

/// Errors raised by the in-memory operations of this crate.
///
/// File-format failures live in [`crate::io::FormatError`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("mask is empty")]
    EmptyMask,
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("probabilities do not sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("category {category} out of range for {count} categories")]
    CategoryOutOfRange { category: usize, count: usize },
    #[error("no valid centroids")]
    NoValidCentroids,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
