use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped so the command-line front end can map them onto
/// distinct exit codes: [`Error::is_config_error`] separates bad inputs from
/// failures that happen while running.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spawn retries exhausted after {0} attempts")]
    SpawnExhausted(usize),

    #[error("action error: {0}")]
    Action(String),

    #[error("inactive agent {0}")]
    InactiveAgent(usize),

    #[error("non-finite loss during update: {0}")]
    NonFiniteLoss(String),

    #[error("timer anomaly: {0}")]
    Timer(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Malformed { path: path.into(), reason: reason.to_string() }
    }

    /// True for errors caused by user-supplied configuration or inputs.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingInput(_)
                | Error::InvalidArgument(_)
                | Error::SchemaVersion { .. }
                | Error::Malformed { .. }
        )
    }
}
