use serde::Serialize;
use thiserror::Error;

use vte_core::qc::ValidationFailure;

/// Validation failures of one batch item, by position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemFailures {
    pub index: usize,
    pub pair_id: String,
    pub failures: Vec<ValidationFailure>,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown worker {0}")]
    UnknownWorker(String),

    #[error("worker {worker_id} has approval rate {approval_rate}, below the required {threshold}")]
    Unauthorized {
        worker_id: String,
        approval_rate: f64,
        threshold: f64,
    },

    #[error("no work available: {available} eligible pairs, {needed} needed")]
    NoWork { needed: usize, available: usize },

    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("{} batch items failed validation", .0.len())]
    Validation(Vec<ItemFailures>),

    /// Deliberately says nothing about which item failed.
    #[error("quality check failed")]
    QualityCheckFailed,

    #[error(transparent)]
    Core(#[from] vte_core::Error),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;
