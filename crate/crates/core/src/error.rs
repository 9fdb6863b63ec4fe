use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Layer, tile or tensor geometry is inconsistent.
    Config(String),
    /// A coordinate lies outside the tensor or store.
    OutOfBounds {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    /// An encoded byte stream or encoded store is malformed.
    Format(String),
    /// A user supplied parameter is out of its domain.
    Validation(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::OutOfBounds { what, index, limit } => {
                write!(f, "{what} index {index} out of range (limit {limit})")
            }
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
