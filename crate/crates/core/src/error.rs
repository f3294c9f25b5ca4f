use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not agree.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Spatial geometry is invalid (empty output, indivisible size, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The API was used in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),

    /// A serialized file is malformed.
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The scene generator could not satisfy its configuration.
    #[error("generation error: {0}")]
    Generation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
