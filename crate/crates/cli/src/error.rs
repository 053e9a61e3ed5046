//! Errors that end a command, and their exit codes.

use std::fmt::Display;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, unreadable inputs, missing prerequisites.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Gateway(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GATEWAY: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Gateway(_) => EXIT_GATEWAY,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub(crate) fn config(e: impl Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn io(e: impl Display) -> Self {
        CliError::Io(e.to_string())
    }
}
