use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OmogError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OmogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing required file")]
    MissingFile { path: PathBuf },

    /// Malformed on-disk content. `offset` is the byte offset where the
    /// problem was detected.
    #[error("{path} @ byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: invalid json: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {what}")]
    Divergence { epoch: usize, what: String },

    #[error("bank entry `{0}` already exists")]
    NameCollision(String),

    #[error("bank is inconsistent: {0}")]
    Inconsistent(String),

    #[error("no bank entry for dataset `{0}`")]
    MissingEntry(String),

    #[error("bank at {0} is locked by another writer")]
    Locked(PathBuf),
}

impl OmogError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            OmogError::MissingFile { path }
        } else {
            OmogError::Io { path, source }
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        OmogError::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
