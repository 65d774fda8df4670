use std::path::PathBuf;

use thiserror::Error;

use crate::server::EpochRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dataset vanished under filter (threshold {threshold})")]
    Vanished { threshold: usize },

    #[error("not enough data: {0}")]
    Insufficient(String),

    #[error("user {user} has only {count} interaction(s); leave-one-out needs at least 2")]
    TooFewInteractions { user: u64, count: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cell index {index} out of range for {cells} cells")]
    Decode { index: u32, cells: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("batch mixes epochs {first} and {other}")]
    MixedEpochs { first: u32, other: u32 },

    #[error("expected {expected} reports, got {actual}")]
    BatchLength { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: u32,
        partial_trace: Vec<EpochRecord>,
    },

    #[error("config {path}:{line}: key `{key}`: {msg}")]
    Config {
        path: String,
        line: usize,
        key: String,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoBare(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
