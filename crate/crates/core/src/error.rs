use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lexicon row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("lexicon source is empty")]
    EmptyLexicon,

    #[error("component out of range: {name}={value} (row {row})")]
    ComponentOutOfRange { row: usize, name: &'static str, value: f64 },

    #[error("empty utterance")]
    EmptyUtterance,

    #[error("empty vocabulary")]
    EmptyVocab,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("distribution is not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: usize, vocab_size: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("input of {len} tokens exceeds context window {window}")]
    OverLength { len: usize, window: usize },

    #[error("dialog {0} has no agent utterance to learn from")]
    NoAgentUtterance(String),

    #[error("metric precondition failed: {0}")]
    Metric(String),

    #[error("models disagree on vocabulary size ({agent} vs {user})")]
    VocabMismatch { agent: usize, user: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
