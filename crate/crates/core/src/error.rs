use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("split index {split} must satisfy 0 < split < {len}")]
    BadSplit { split: usize, len: usize },

    #[error("seasonal period {period} must satisfy 1 <= period < split index {split}")]
    BadPeriod { period: usize, split: usize },

    #[error("dataset needs at least one channel")]
    NoChannels,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("forecast kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("normalization method {found} not allowed here (expected {expected})")]
    WrongMethod { expected: String, found: String },

    #[error("invalid normalization statistics: {0}")]
    BadStats(String),

    #[error("non-positive or non-finite sigma at ({row}, {col})")]
    NonPositiveSigma { row: usize, col: usize },

    #[error("bin index {bin} out of range for {bins} bins at ({row}, {col})")]
    BadBinIndex {
        row: usize,
        col: usize,
        bin: usize,
        bins: usize,
    },

    #[error("invalid tokenizer: {0}")]
    BadTokenizer(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("instance source exhausted after {rejected} rejected instances at step {step}")]
    SourceExhausted { step: usize, rejected: usize },

    #[error("window of length {len} too short for lag {lag}")]
    WindowTooShort { len: usize, lag: usize },

    #[error("reference MASE must be positive, got {0}")]
    ZeroReference(f64),

    #[error("dataset {dataset}: {available} test rows, need at least {needed}")]
    InsufficientTestData {
        dataset: String,
        available: usize,
        needed: usize,
    },

    #[error("window of {needed} rows does not fit in {available} training rows")]
    WindowTooLong { needed: usize, available: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown dataset {0:?}")]
    MissingDataset(String),

    #[error("invalid plan: {}", .0.join("; "))]
    InvalidPlan(Vec<String>),

    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),

    #[error("{path}: parse error at row {row}, column {col}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("{path}: {rows} rows is too short")]
    TooShort { path: PathBuf, rows: usize },

    #[error("report schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },

    #[error("data access violation: {0}")]
    Leakage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
