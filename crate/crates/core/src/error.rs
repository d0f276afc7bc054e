use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("duplicate doc_id {0:?}")]
    DuplicateDoc(String),

    #[error("duplicate topic_id {0:?}")]
    DuplicateTopic(String),

    #[error("missing variant {lang} for {topic_id}")]
    MissingVariant { topic_id: String, lang: String },

    #[error("unknown document {0:?}")]
    UnknownDoc(String),

    #[error("invalid run for topic {topic_id}: {message}")]
    InvalidRun { topic_id: String, message: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("candidate {doc_id:?} of topic {topic_id:?} has no sentence scores")]
    MissingSentenceScores { topic_id: String, doc_id: String },

    #[error("invalid index snapshot: {0}")]
    Snapshot(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Scorer(#[from] ScorerError),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }

    /// True when the failure came from a sentence scorer, possibly wrapped in
    /// fold context.
    pub fn is_scorer_error(&self) -> bool {
        match self {
            Error::Scorer(_) => true,
            Error::Fold { source, .. } => source.is_scorer_error(),
            _ => false,
        }
    }
}

/// Failures talking to a sentence scorer.
#[derive(Debug, Error)]
pub enum ScorerError {
    /// Connection, timeout or non-200 status. Worth retrying.
    #[error("scorer transport error: {0}")]
    Transport(String),

    /// The scorer answered, but the answer violates the wire contract.
    #[error("scorer protocol error (request {request_id}): {message}")]
    Protocol { request_id: String, message: String },

    #[error("invalid scorer spec {spec:?}: {message}")]
    Spec { spec: String, message: String },
}

impl ScorerError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ScorerError::Transport(_))
    }

    pub(crate) fn protocol(request_id: &str, message: impl Into<String>) -> Self {
        ScorerError::Protocol {
            request_id: request_id.to_string(),
            message: message.into(),
        }
    }
}
