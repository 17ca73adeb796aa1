//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Errors raised by the rig, binding, rendering, loss and IO layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Array lengths or shapes that do not line up.
    #[error("structural error: {0}")]
    Structural(String),
    /// Inputs with the right shape but invalid values.
    #[error("validation error: {0}")]
    Validation(String),
    /// A triangle too thin to carry a face frame.
    #[error("degenerate face {face}: {reason}")]
    DegenerateFace { face: usize, reason: String },
    /// Malformed file contents.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
