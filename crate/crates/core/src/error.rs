use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("resample error: {0}")]
    Resample(String),

    #[error("undefined distance: {0}")]
    UndefinedDistance(String),

    #[error("unsupported format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("range error: {0}")]
    Range(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Broad classes used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::InvalidKernel(_)
            | Error::Domain(_)
            | Error::Config(_) => ErrorClass::Config,
            Error::UnsupportedFormat { .. } | Error::CorruptFile { .. } | Error::Io { .. } => {
                ErrorClass::Io
            }
            Error::DegenerateKernel(_)
            | Error::Normalization(_)
            | Error::Resample(_)
            | Error::UndefinedDistance(_)
            | Error::Range(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn unsupported(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::UnsupportedFormat {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
