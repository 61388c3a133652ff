use thiserror::Error;

use crate::model::TaskId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quality {0} is outside [0, 1]")]
    QualityDomain(f64),

    #[error("invalid processing time function: {0}")]
    InvalidPtf(String),

    #[error("solution is infeasible: {0}")]
    Infeasible(String),

    #[error("task {0} arrived twice")]
    DuplicateArrival(TaskId),

    #[error("solution received for task {0}, which is not being processed")]
    UnknownCompletion(TaskId),

    #[error("observation discarded: {0}")]
    Discarded(String),

    #[error("not enough observations to train: have {have}, need {need}")]
    TooFewObservations { have: usize, need: usize },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("simulation invariant violated at t={time}: {message}")]
    Invariant { time: i64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
