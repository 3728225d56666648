//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file at the container level (wrong size, bad magic, ...).
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Well-formed container carrying invalid data.
    #[error("invalid data at point {index}: {reason}")]
    Data { index: usize, reason: String },

    /// Text parse failure with a 1-based line/entry index.
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// A value violates a documented precondition or invariant.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Grid query addressed a cell with no pillar.
    #[error("no pillar at cell ({0}, {1})")]
    CellNotFound(i64, i64),

    /// A mask or flag vector does not match its paired frame.
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// Corrupt or undecodable bitstream.
    #[error("decode error: {0}")]
    Decode(String),

    /// Bits-per-point is undefined for an empty frame.
    #[error("bits per point undefined: original point count is zero")]
    UndefinedRate,

    /// Name lookup failed; lists the accepted names.
    #[error("unknown name {name:?}, expected one of: {}", valid.join(", "))]
    UnknownName { name: String, valid: Vec<String> },

    /// A rate curve has too few points for a cubic fit.
    #[error("rate curve needs at least {needed} points, got {got}")]
    CurveArity { needed: usize, got: usize },

    /// Two rate curves share no log-rate interval.
    #[error("rate curves do not overlap in log-rate range")]
    CurveOverlap,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(reason: impl Into<String>) -> Self {
        Error::Validation(reason.into())
    }
}
