use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by who is at fault: the caller's shapes and
/// arguments, the files on disk, or the numerics.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents that do not fit together.
    #[error("shape error: {0}")]
    Shape(String),

    /// An argument outside the documented domain (even kernel, bad threshold, ...).
    #[error("spec error: {0}")]
    Spec(String),

    /// A precondition on call order or collection size was violated.
    #[error("contract error: {0}")]
    Contract(String),

    /// Invalid model or training configuration.
    #[error("config error: {0}")]
    Config(String),

    /// The computation graph is malformed.
    #[error("graph error: {0}")]
    Graph(String),

    /// NaN/Inf where a finite value was required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A binary container does not follow its layout.
    #[error("format error: {0}")]
    Format(String),

    /// Input data violates a data contract (non-binary mask, missing manifest field, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
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

pub type Result<T> = std::result::Result<T, Error>;
