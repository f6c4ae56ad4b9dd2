use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The distance to the truth is undefined until the first mixture fit.
    #[error("estimate not available yet ({responses} of {warmup} warm-up responses collected)")]
    NotYetEstimable { responses: usize, warmup: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parse error in case `{case_id}`, field `{field}`: {message}")]
    Parse {
        case_id: String,
        field: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("embedding provider contract violated: {0}")]
    ProviderContract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
