//! Crate-wide error type.

use std::fmt;

/// Errors raised by the numeric core, model code, and file formats.
#[derive(Debug)]
pub enum Error {
    /// Tensor or layer shape mismatch.
    Dimension(String),
    /// Invalid argument or configuration value.
    Parameter(String),
    /// Malformed file contents; `offset` is the byte position when known.
    Format { message: String, offset: Option<usize> },
    /// Checkpoint written by an unsupported format version.
    UnsupportedVersion { found: String, supported: &'static str },
    /// Underlying I/O failure.
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format { message: msg.into(), offset: None }
    }

    pub fn format_at(msg: impl Into<String>, offset: usize) -> Self {
        Error::Format { message: msg.into(), offset: Some(offset) }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Format { message, offset: Some(off) } => {
                write!(f, "format error at byte {off}: {message}")
            }
            Error::Format { message, offset: None } => write!(f, "format error: {message}"),
            Error::UnsupportedVersion { found, supported } => {
                write!(f, "unsupported format version {found} (supported: {supported})")
            }
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
