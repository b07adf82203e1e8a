//! Command implementations behind the `mnn` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, missing file, malformed data: exit code 1.
    #[error("{0}")]
    User(String),
    /// A numerical routine aborted: exit code 2.
    #[error("numeric abort: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<moment_nn::Error> for CliError {
    fn from(e: moment_nn::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::User(format!("{}: {e}", path.display()))
}
