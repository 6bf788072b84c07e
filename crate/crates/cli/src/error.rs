//! CLI error taxonomy mapped onto stable exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 1: a numeric run or validation suite failed.
    #[error("{0}")]
    Suite(String),
    /// Exit code 1: a solver or chain failed mid-run.
    #[error("{0}")]
    Numeric(String),
    /// Exit code 2: the configuration is invalid.
    #[error("{0}")]
    Config(String),
    /// Exit code 3: filesystem trouble.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Suite(_) | CliError::Numeric(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}
