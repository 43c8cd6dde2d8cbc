use std::path::PathBuf;

use thiserror::Error;

/// Failure reported by an external capability (LLM, search engine, embedder, ...).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("port `{port}` failed: {message}")]
pub struct PortError {
    pub port: String,
    pub message: String,
}

impl PortError {
    pub fn new(port: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            port: port.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed annotation: {0}")]
    MalformedAnnotation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Port(#[from] PortError),

    #[error("cache integrity error: {0}")]
    CacheIntegrity(String),

    #[error("retrieval failure: {0}")]
    Retrieval(String),

    #[error("{path}:{line}: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
