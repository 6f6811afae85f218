use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the polar BPL toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("not a permutation of 0..{len}: {reason}")]
    InvalidPermutation { len: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("enumeration of {size} permutations is too large (limit {limit})")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("no candidate rows left to select from")]
    NoCandidates,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn length(expected: usize, actual: usize) -> Self {
        Error::LengthMismatch { expected, actual }
    }
}
