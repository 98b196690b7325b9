//! Error type shared across the crate.

use std::fmt;
use std::io;

#[derive(Debug)]
pub enum Error {
    /// Malformed or inconsistent configuration text.
    Config(String),
    /// An invariant or input-domain check failed.
    Validation(String),
    /// A working set does not fit a hardware buffer.
    Capacity {
        what: String,
        required_bytes: usize,
        available_bytes: usize,
    },
    /// Serialized data does not match the expected schema.
    Schema(String),
    Io {
        path: String,
        source: io::Error,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Capacity {
                what,
                required_bytes,
                available_bytes,
            } => write!(
                f,
                "capacity error: {what} needs {required_bytes} B but only {available_bytes} B are available"
            ),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
