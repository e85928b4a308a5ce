//! Error type shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its admissible range or inconsistent
    /// with other settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A LAPACK routine reported a nonzero `info` code.
    #[error("LAPACK {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    /// A numerical procedure failed to meet its own acceptance test
    /// (non-convergence, ambiguous eigenvalue tracking, aliasing, ...).
    #[error("numerical failure: {0}")]
    Numerics(String),

    /// An operator cache file is unreadable, corrupt, or inconsistent.
    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
