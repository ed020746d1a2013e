use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {message}")]
    Input { path: String, message: String },
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error(transparent)]
    Core(#[from] blase_core::Error),
}

impl CliError {
    /// 2 for bad input or configuration, 3 for failures during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::Output { .. } => 3,
        }
    }

    pub fn input(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Input { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn output(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Output { path: path.display().to_string(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
