use std::path::PathBuf;

use thiserror::Error;

use crate::io::npy::NpyError;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped by how the command line reports them: shape and
/// parameter problems are numeric-configuration errors, everything that comes
/// from reading or validating files is a data error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("npy error in {path}: {source}")]
    Npy {
        path: PathBuf,
        #[source]
        source: NpyError,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("io error on {path}: {source}")]
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

    /// Process exit code used by the command line: 3 for data/format
    /// problems, 4 for numeric and shape/parameter problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) | Error::Parameter(_) | Error::Numeric(_) => 4,
            Error::Validation(_)
            | Error::Npy { .. }
            | Error::Format(_)
            | Error::Integrity(_)
            | Error::Manifest(_)
            | Error::Io { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
