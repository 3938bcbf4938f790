use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index} ({row}, {col}) is out of bounds for a {n_rows}x{n_cols} matrix")]
    RecordOutOfBounds {
        index: usize,
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("record {index} has invalid weight {weight}; weights must be finite and non-negative")]
    InvalidWeight { index: usize, weight: f64 },
    #[error("index {index} is out of bounds (length {len})")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown input format `{0}` (expected movielens-csv, tsv-quad or netflix-dir)")]
    UnknownFormat(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot sample {requested} interactions from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error(
        "{n_items} items exceed the dense Gram cap of {cap}; subsample the dataset or raise the cap"
    )]
    TooManyItems { n_items: usize, cap: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
