use std::path::PathBuf;

/// Errors produced by loaders, index queries and the search algorithms.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} file {path} at byte offset {offset}: {reason}")]
    Format {
        format: &'static str,
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("csv parse error in {path} at row {row}: {reason}")]
    CsvParse {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("no input files given")]
    NoInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter {name}: {reason}")]
    Param { name: &'static str, reason: String },

    #[error("k = {k} exceeds the {available} available points")]
    KTooLarge { k: usize, available: usize },

    #[error("insufficient uncovered points: need at least {needed}, have {available}")]
    InsufficientUncovered { needed: usize, available: usize },

    #[error("no region of mass at least alpha = {alpha} exists in the candidate family")]
    Infeasible { alpha: f64 },

    #[error("oracle guard exceeded: {0}")]
    OracleGuard(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Param {
            name,
            reason: reason.into(),
        }
    }
}
