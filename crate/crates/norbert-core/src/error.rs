//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input data (bad TSV line, unparseable file, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A precondition on arguments or configuration was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric computation produced a non-finite or otherwise unusable value.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("checkpoint magic mismatch (not a model checkpoint)")]
    CheckpointMagic,

    #[error("unsupported checkpoint format version {0}")]
    CheckpointVersion(u32),

    #[error("checkpoint tensor {name}: expected shape {expected:?}, found {found:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("checkpoint was trained against a different vocabulary")]
    CheckpointVocabHash,

    #[error("checkpoint truncated or corrupt: {0}")]
    CheckpointCorrupt(String),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
