//! CLI error type carrying the process exit code.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::fmt;

use cdarec_core::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or argument values.
    Usage(String),
    /// Unreadable, malformed, or inconsistent input data.
    Data(String),
    /// Divergence, failed gradient verification, or non-finite values.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> CliError {
        CliError::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> CliError {
        CliError::Numeric(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Numeric(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        match e {
            CoreError::InvalidArgument(m) => CliError::Usage(m),
            CoreError::ShapeMismatch(m) | CoreError::Data(m) => CliError::Data(m),
            CoreError::NonFinite(m) => CliError::Numeric(format!("non-finite value: {m}")),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
