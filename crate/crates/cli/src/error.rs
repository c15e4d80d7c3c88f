use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] ternlut_core::Error),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// Process exit code: 1 for I/O, 2 for bad input or shapes, 3 for failed checks.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Core(_) | CliError::Format(_) | CliError::Usage(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}
