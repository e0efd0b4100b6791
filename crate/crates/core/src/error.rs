use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Coarse failure classes, used by the command-line front end to report
/// one diagnostic per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Format,
    Integrity,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorClass::Io => "io",
            ErrorClass::Format => "format",
            ErrorClass::Integrity => "integrity",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Integrity(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, line: usize, message: impl fmt::Display) -> Self {
        Error::Format { path: path.to_path_buf(), line, message: message.to_string() }
    }

    pub fn integrity(message: impl fmt::Display) -> Self {
        Error::Integrity(message.to_string())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Format { .. } => ErrorClass::Format,
            Error::Integrity(_) => ErrorClass::Integrity,
        }
    }
}
