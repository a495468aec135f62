use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems reading a dataset CSV. Each variant is a distinct class so
/// callers can react to (and tests can assert on) the precise failure.
#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("missing column `{column}`")]
    MissingColumn { column: String },
    #[error("unexpected column `{found}` at position {position} (expected `{expected}`)")]
    UnexpectedColumn {
        position: usize,
        found: String,
        expected: String,
    },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: {value} outside [{min}, {max}]")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("malformed csv: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint format_version {found} (this build reads {expected})")]
    Version { found: u64, expected: u64 },
    #[error("checkpoint shape audit failed: {0}")]
    ShapeAudit(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}")]
    Usage(String),
    #[error("objective evaluation at coordinate {index} is not finite")]
    NonFiniteEvaluation { index: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("singular system (pivot {pivot}); use a ridge penalty > 0")]
    Singular { pivot: usize },
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data/parse, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Csv(_) | Error::Checkpoint(_) | Error::Io { .. } => 2,
            Error::Shape { .. }
            | Error::NonFiniteEvaluation { .. }
            | Error::Numerical(_)
            | Error::Singular { .. } => 3,
        }
    }
}
