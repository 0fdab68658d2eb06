use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("invalid configuration: {field}: {msg}")]
    Validation { field: String, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: malformed field file: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Core(#[from] akcy_core::Error),

    /// A run that finished but did not meet its checks.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn invalid(field: &str, msg: impl Into<String>) -> Self {
        CliError::Validation { field: field.to_string(), msg: msg.into() }
    }

    /// 1 for numerical failures, 2 for usage, configuration and input errors.
    pub fn exit_code(&self) -> i32 {
        use akcy_core::Error as E;
        match self {
            CliError::Core(E::InvalidGrid(_) | E::InvalidConfig(_) | E::GridMismatch) => 2,
            CliError::Core(_) | CliError::Failed(_) => 1,
            _ => 2,
        }
    }
}
