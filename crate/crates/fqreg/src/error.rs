//! Error type shared across the crate.
//!
//! Errors fall into three categories that map onto process exit codes:
//! configuration problems (exit 2), malformed or inconsistent input data
//! (exit 3), and numerical failures during sampling (exit 4).

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad parameter values, unknown keys, missing
    /// referenced paths.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (ragged CSV rows, non-finite
    /// values, dimension mismatches between files).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure that survived the built-in guards, e.g. a precision
    /// matrix that stays non-positive-definite after jitter retries.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(format!("io: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
