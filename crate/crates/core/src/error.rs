use thiserror::Error;

use crate::domain::DocId;

pub type Result<T, E = ListkError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ListkError {
    #[error("document {0} has no ground-truth score")]
    MissingScore(DocId),

    #[error("scores must be present on every document or on none")]
    PartialScores,

    #[error("duplicate document id {0}")]
    DuplicateId(DocId),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("list of {got} documents exceeds the oracle list size {max}")]
    ListTooLong { got: usize, max: usize },

    #[error("oracle called with an empty list")]
    EmptyList,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("could not parse a ranking from model output {0:?}")]
    UnparsableRanking(String),

    #[error("remote oracle failed after {attempts} attempts: {last_error}")]
    RemoteExhausted { attempts: u32, last_error: String },

    #[error("results violate exactness against brute force: {0}")]
    ExactnessViolation(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingest { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ListkError {
    /// Whether the error stems from bad input rather than a failure while
    /// running.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            ListkError::MissingScore(_)
                | ListkError::PartialScores
                | ListkError::DuplicateId(_)
                | ListkError::EmptyCorpus
                | ListkError::InvalidParameter(_)
                | ListkError::UndefinedMetric(_)
                | ListkError::Ingest { .. }
                | ListkError::Config(_)
                | ListkError::Io(_)
                | ListkError::Json(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ListkError::InvalidParameter(msg.into())
    }
}
