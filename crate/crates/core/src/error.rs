use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TextError {
    #[error("answer must be non-empty")]
    EmptyAnswer,
    #[error("answer {0:?} does not occur verbatim in the context")]
    AnswerNotFound(String),
    #[error("question and context share no anchor word")]
    NoAnchor,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("sample {id} discarded: {reason}")]
    SampleDiscarded { id: String, reason: String },
    #[error("baseline edit failed for {id}: {reason}")]
    BaselineFailed { id: String, reason: String },
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{location}: {message}")]
    Parse { path: PathBuf, location: String, message: String },
    #[error("unknown record id {0:?}")]
    UnknownId(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DatasetError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("dataset mismatch: {0} vs {1}")]
    DatasetMismatch(String, String),
    #[error("sample ids differ between runs: {0}")]
    IdMismatch(String),
}
