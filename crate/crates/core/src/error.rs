use std::io;

use crate::autodiff::checkpoint::CheckpointError;
use crate::autodiff::AdError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed scene: {0}")]
    MalformedScene(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("io error at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Numeric aborts (non-finite values) as opposed to data or usage faults.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Autodiff(AdError::NonFinite { .. }))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
