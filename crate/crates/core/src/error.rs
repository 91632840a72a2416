use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the probing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{file}:{line}: parse error: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("sentence {sentence_id}: {message}")]
    Structure { sentence_id: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("non-finite value in sentence {ordinal}")]
    NonFinite { ordinal: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("alignment mismatch: {0}")]
    Alignment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient {which} matrix (rank {rank} < {expected})")]
    RankDeficient {
        which: &'static str,
        rank: usize,
        expected: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
