use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected} elements, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("embedding must have at least one dimension")]
    EmptyDimension,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("vector norm below threshold")]
    ZeroNorm,

    #[error("every entry is masked")]
    AllMasked,

    #[error("temperature must be positive, got {0}")]
    TemperatureNonPositive(f64),

    #[error("bootstrap weight must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("record {record} has no sentences")]
    EmptySentenceSet { record: usize },

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("template must contain exactly one `{{}}` placeholder, found {0}")]
    BadTemplate(usize),

    #[error("invalid prompt set: {0}")]
    InvalidPrompts(String),

    #[error("raster has no present cells")]
    EmptyRaster,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("text encoder has no embedding for {0:?}")]
    UnknownText(String),

    #[error("no visual features for tile {0:?}")]
    MissingFeatures(String),

    #[error("sentence id {0} not in the sentence bank")]
    UnknownSentence(u64),

    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CoreError::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
