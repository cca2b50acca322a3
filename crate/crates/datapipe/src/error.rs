use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed Speciesbox template: {0}")]
    MalformedTemplate(String),

    #[error("article {0:?} has no habitat sentences")]
    EmptyHabitat(String),

    #[error("point ({easting}, {northing}) lies outside the grid extent")]
    OutOfExtent { easting: f64, northing: f64 },

    #[error("merge map contains a cycle through {0:?}")]
    MergeCycle(String),

    #[error("spatial split needs at least 3 blocks, found {0}")]
    TooFewBlocks(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] wincel_core::CoreError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
