use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;
use crate::evaluation::EvalOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage at which an answer run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Embed,
    Retrieve,
    Confirm,
    Answer,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Embed => "embed",
            Stage::Retrieve => "retrieve",
            Stage::Confirm => "confirm",
            Stage::Answer => "answer",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("embedding is not unit-norm (norm = {norm})")]
    Normalization { norm: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: record {index}: {message}", path.display())]
    Record {
        path: PathBuf,
        index: usize,
        field: Option<String>,
        message: String,
    },

    #[error("{}: integrity violation at line {line}: {message}", path.display())]
    Integrity {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("confirmation failed: {0}")]
    Confirmation(#[source] BackendError),

    #[error("backend error: {0}")]
    Backend(#[from] BackendError),

    #[error("pipeline failed at {stage} stage: {source}")]
    Pipeline {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol aborted after {} outcomes: {source}", partial.len())]
    Aborted {
        #[source]
        source: Box<Error>,
        partial: Vec<EvalOutcome>,
    },

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(stage: Stage, source: Error) -> Self {
        Error::Pipeline {
            stage,
            source: Box::new(source),
        }
    }
}
