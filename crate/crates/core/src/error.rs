use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum ZddaError {
    /// A file did not follow its declared binary or text layout.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Two inputs that must agree (lengths, labels, counts) do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Shapes or widths do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Not enough items to satisfy the request.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Invalid configuration or wiring.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A frozen state was handed to a training operation, or a required
    /// frozen state was not frozen.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Words missing from an embedding table.
    #[error("vocabulary error: missing words {missing:?}")]
    Vocabulary { missing: Vec<String> },

    /// A dataset or file referenced by a config could not be located.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl ZddaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZddaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        ZddaError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = ZddaError> = std::result::Result<T, E>;
