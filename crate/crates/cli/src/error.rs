use std::fmt;
use std::process::ExitCode;

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const USAGE: u8 = 1;
pub const IO: u8 = 2;
pub const ASSERTION: u8 = 3;
pub const BACKEND: u8 = 4;

impl CliError {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }

    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self::new(USAGE, error)
    }

    pub fn io(error: impl Into<anyhow::Error>) -> Self {
        Self::new(IO, error)
    }

    pub fn assertion(message: impl fmt::Display) -> Self {
        Self::new(ASSERTION, anyhow::anyhow!("{message}"))
    }

    pub fn backend(error: impl Into<anyhow::Error>) -> Self {
        Self::new(BACKEND, error)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}
