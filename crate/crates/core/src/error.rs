use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("unknown grade letter `{0}`")]
    UnknownLetter(String),

    #[error("invalid grade scale: {0}")]
    Scale(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown {kind} `{name}`")]
    UnknownId { kind: &'static str, name: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },

    #[error("infeasible synthetic config: {0}")]
    Infeasible(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable short identifier for the error class, used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Ingest { .. } => "ingest",
            Error::UnknownLetter(_) => "unknown-letter",
            Error::Scale(_) => "scale",
            Error::Parameter(_) => "parameter",
            Error::Dimension { .. } => "dimension",
            Error::Empty(_) => "empty",
            Error::UnknownId { .. } => "unknown-id",
            Error::NonFinite { .. } => "non-finite",
            Error::Infeasible(_) => "infeasible",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
