use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: non-increasing {series} timestamp {t} at line {line}")]
    NonMonotonic {
        path: PathBuf,
        series: &'static str,
        t: f64,
        line: u64,
    },

    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    Version {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse class of the failure, used by front ends to pick exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Invalid { .. } => ErrorClass::Usage,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonMonotonic { .. }
            | Error::Version { .. }
            | Error::Format { .. } => ErrorClass::Io,
            Error::Precondition(_) | Error::Numeric { .. } => ErrorClass::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Numeric,
}
