use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed or out-of-range input data (bad rows, unknown labels,
    /// violated bounds). Maps to exit code 1 in the CLI.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Numerical or model failure (non-convergence, rank deficiency,
    /// too many dropped bootstrap replicates). Maps to exit code 2.
    #[error("model error: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }

    /// CLI exit code contract: 1 for validation errors, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Config(_) | Error::Csv(_) => 1,
            Error::Io(_) | Error::Model(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
