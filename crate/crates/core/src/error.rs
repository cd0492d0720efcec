use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SmorlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SmorlError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("index {index} out of range for {what} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("non-deterministic loss: two evaluations at identical parameters gave {first} and {second}")]
    Determinism { first: f64, second: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("dataset is empty after preprocessing")]
    EmptyDataset,

    #[error("cannot split {sessions} sessions: {reason}")]
    Split { sessions: usize, reason: String },

    #[error("training diverged: {0}")]
    Training(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl SmorlError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SmorlError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            SmorlError::Config(_) => 2,
            SmorlError::Io { .. }
            | SmorlError::Format(_)
            | SmorlError::EmptyDataset
            | SmorlError::Split { .. } => 3,
            SmorlError::Training(_) | SmorlError::Determinism { .. } => 4,
            SmorlError::UndefinedMetric(_) => 5,
            SmorlError::Dimension { .. } | SmorlError::Index { .. } | SmorlError::Range(_) => 6,
        }
    }
}
