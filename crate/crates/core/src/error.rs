use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model has no receptive fields")]
    NoReceptiveFields,

    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("malformed model stream at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("learned model `{0}` has not been trained")]
    UntrainedModel(&'static str),

    #[error("log {path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("log {path}, line {line}: {reason}")]
    LogRow { path: PathBuf, line: u64, reason: String },

    #[error("no training samples")]
    EmptyTrainingSet,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
