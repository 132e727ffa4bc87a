use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum IppError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("point {0:?} lies outside the world bounds")]
    OutOfBounds([f64; 3]),
    #[error("illegal move {action:?} from cell {cell:?}")]
    IllegalMove { cell: [usize; 3], action: crate::world::Action },
    #[error("insufficient samples: need at least 2 per group, got {0} and {1}")]
    InsufficientSamples(u64, u64),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("no data to write")]
    NoData,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IppError::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, err: csv::Error) -> Self {
        let path = path.into();
        match err.into_kind() {
            csv::ErrorKind::Io(source) => IppError::Io { path, source },
            other => IppError::Io { path, source: std::io::Error::other(format!("{other:?}")) },
        }
    }

    /// Short machine-readable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            IppError::NumericalFailure(_) => "numerical_failure",
            IppError::Parse { .. } => "parse_error",
            IppError::Shape(_) => "shape_error",
            IppError::OutOfBounds(_) => "out_of_bounds",
            IppError::IllegalMove { .. } => "illegal_move",
            IppError::InsufficientSamples(..) => "insufficient_samples",
            IppError::ShapeMismatch { .. } => "shape_mismatch",
            IppError::Config(_) => "config_error",
            IppError::Checkpoint(_) => "checkpoint_error",
            IppError::NoData => "no_data",
            IppError::Io { .. } => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, IppError>;
