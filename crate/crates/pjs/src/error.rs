//! Crate-wide error type.

use std::fmt;

/// Errors produced by solvers, the tracker, and dataset loading.
#[derive(Debug)]
pub enum Error {
    /// Malformed numerical input: dimension mismatch, non-finite values.
    InvalidInput(String),
    /// A configuration value violates its constraints.
    InvalidConfig(String),
    /// A geometric state cannot be used (e.g. degenerate warp).
    InvalidState(String),
    /// Evidence or weights degenerate to zero; the caller decides recovery.
    Degenerate(String),
    /// A sequence or run directory could not be loaded.
    Load(String),
    /// A matrix factorization or solve failed.
    Numerical(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::InvalidState(msg) => write!(f, "invalid state: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate: {msg}"),
            Error::Load(msg) => write!(f, "load error: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
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
