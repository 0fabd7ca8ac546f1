//! Crate-wide error type.

use std::fmt;

/// Errors surfaced by the recommender library.
#[derive(Debug)]
pub enum Error {
    /// Matrix or operator dimensions do not line up.
    Shape(String),
    /// A configuration value is out of its valid range or inconsistent.
    Config(String),
    /// Input data failed parsing or validation.
    Data(String),
    /// An operation was called in a state that cannot support it.
    State(String),
    /// A computation produced or encountered a non-finite value.
    Numeric(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
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

pub type Result<T> = std::result::Result<T, Error>;
