use std::path::PathBuf;

use maskcal::io::{FormatError, IoError};
use thiserror::Error;

/// Failure of one invocation, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    File(#[from] IoError),
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] maskcal::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::File(IoError::Io { .. }) => 3,
            Self::File(_) | Self::Format(_) => 4,
            Self::Config { .. } | Self::Compute(maskcal::Error::InvalidConfig(_)) => 5,
            Self::Compute(_) => 6,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            3 => "io",
            4 => "format",
            5 => "config",
            _ => "compute",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
