use std::path::PathBuf;

use crate::corpus::Intent;

/// Errors raised anywhere in the generation and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {message}")]
    Record {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("unknown intent label `{0}`")]
    UnknownIntent(String),

    #[error("unknown split `{0}`")]
    UnknownSplit(String),

    #[error("intent `{0}` cannot be used as a generation target")]
    ExcludedIntent(Intent),

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("prompt does not fit the window: zero-shot needs {needed} tokens, limit is {limit}")]
    PromptTooLarge { needed: usize, limit: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("network access disabled by NO_NETWORK=1; refusing remote {0}")]
    NetworkDisabled(&'static str),

    #[error("authentication rejected by {service} (HTTP {status})")]
    Auth { service: &'static str, status: u16 },

    #[error("{service} returned HTTP {status} after {attempts} attempt(s)")]
    HttpStatus {
        service: &'static str,
        status: u16,
        attempts: u32,
    },

    #[error("{service} transport failure after {attempts} attempt(s): {cause}")]
    Transport {
        service: &'static str,
        attempts: u32,
        cause: String,
    },

    #[error("malformed response from {service}: {message}")]
    MalformedResponse {
        service: &'static str,
        message: String,
    },

    #[error("entry `{entry}` failed during {stage}: {source}")]
    Stage {
        entry: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, entry: &str, stage: &'static str) -> Self {
        Error::Stage {
            entry: entry.to_string(),
            stage,
            source: Box::new(self),
        }
    }
}
