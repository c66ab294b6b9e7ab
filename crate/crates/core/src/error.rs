//! Crate-wide error type.

use std::fmt;
use std::io;

/// A type alias for `Result<T, Error>`.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the library.
#[derive(Debug)]
pub enum Error {
    /// Tensor or matrix dimensions do not line up.
    Shape(String),
    /// A pruning schedule violates one of its invariants.
    Schedule(String),
    /// An operation parameter is out of range (e.g. `k >= n`).
    Param(String),
    /// A configuration is inconsistent or incomplete.
    Config(String),
    /// Token recovery preconditions are not met.
    Recovery(String),
    /// A forward pass produced a non-finite value.
    Numeric { block: usize, detail: String },
    /// A file could not be parsed; `location` is a line number or byte offset.
    Parse { location: String, detail: String },
    /// An internal invariant failed; indicates a bug, not bad input.
    Internal(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Schedule(msg) => write!(f, "schedule error: {msg}"),
            Error::Param(msg) => write!(f, "parameter error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Recovery(msg) => write!(f, "recovery error: {msg}"),
            Error::Numeric { block, detail } => {
                write!(f, "numeric error in block {block}: {detail}")
            }
            Error::Parse { location, detail } => write!(f, "parse error at {location}: {detail}"),
            Error::Internal(msg) => write!(f, "internal error: {msg}"),
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

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}
