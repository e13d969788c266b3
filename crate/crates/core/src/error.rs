use std::path::PathBuf;

/// Errors produced by the training and evaluation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid hyperparameters, model specification or generator settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// Mismatched vector/matrix dimensions or a stale forward trace.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid call, e.g. an empty batch or an empty score list.
    #[error("usage error: {0}")]
    Usage(String),

    /// Class label outside `[0, K)`.
    #[error("index error: label {label} out of range for {classes} classes")]
    Index { label: usize, classes: usize },

    /// Non-finite values during optimization.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed input file.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
