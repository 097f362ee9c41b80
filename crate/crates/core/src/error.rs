use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {lhs} vs {rhs}")]
    Shape { lhs: String, rhs: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model spec: field `{field}` {reason}")]
    Spec { field: &'static str, reason: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: duplicate timestamp {timestamp} at line {line}")]
    DuplicateTimestamp {
        path: PathBuf,
        line: usize,
        timestamp: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("feature `{0}` is constant over the training range")]
    ConstantFeature(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint version `{0}` (this build reads version 1)")]
    CheckpointVersion(String),

    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    #[error("tape does not belong to this model state")]
    StaleTape,

    #[error("cell cache missing or inconsistent with parameters: {0}")]
    StaleCache(&'static str),

    #[error("normalizer mismatch between checkpoint and data pipeline")]
    NormalizerMismatch,

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("unstable simulation: dt * exchange rate = {0} >= 2, use a gentler ventilation rate")]
    UnstableStep(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(lhs: impl Into<String>, rhs: impl Into<String>) -> Self {
        Error::Shape {
            lhs: lhs.into(),
            rhs: rhs.into(),
        }
    }
}
