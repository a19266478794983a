//! Error type shared across the crate.
//!
//! Variants map onto the process exit codes used by the CLI: usage errors
//! exit 1, data/format/IO errors exit 2, numerical failures exit 3.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible matrix/vector dimensions. Carries both shapes.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// Caller misuse: bad flags, invalid labels, empty splits, bad config.
    #[error("{0}")]
    Usage(String),

    /// Malformed or inconsistent input data.
    #[error("{path}{line}: {message}", path = path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(), line = line.map(|l| format!(":{l}")).unwrap_or_default())]
    Data {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    /// Non-finite values where finite ones are required (e.g. diverged loss).
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("I/O error{}: {source}", path.as_ref().map(|p| format!(" on {}", p.display())).unwrap_or_default())]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            path: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn data_at(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: Some(path.into()),
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    /// Process exit code for the CLI (0 is success and never produced here).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Shape { .. } | Error::Data { .. } | Error::Io { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
