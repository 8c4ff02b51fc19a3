use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("cannot densify a signature with no occupied bins")]
    EmptySignature,

    #[error("similarity is undefined when both substring sets are empty")]
    EmptyUnion,

    #[error("line {line}: control character U+{code:04X} inside a token")]
    ControlCharacter { line: usize, code: u32 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{file}: {location}: {message}")]
    Format {
        file: String,
        location: String,
        message: String,
    },

    #[error("{file}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        file: String,
        found: u64,
        expected: u64,
    },

    #[error("invalid bound input: {0}")]
    Bounds(String),

    #[error("failed to start worker pool: {0}")]
    WorkerPool(#[from] rayon::ThreadPoolBuildError),
}

/// Coarse classification used by the command line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParams(_)
            | Error::EmptyUnion
            | Error::ControlCharacter { .. }
            | Error::Format { .. }
            | Error::VersionMismatch { .. }
            | Error::Bounds(_) => ErrorKind::Validation,
            Error::Io { .. } => ErrorKind::Io,
            Error::EmptySignature | Error::WorkerPool(_) => ErrorKind::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        file: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            file: file.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}
