use thiserror::Error;

use crate::domain::{FingerClass, Hand};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0:?} does not carry characters")]
    NonTypingFinger(FingerClass),

    #[error("no characters are mapped to the {0:?} hand")]
    EmptyHand(Hand),

    #[error("invalid key-finger map: {0}")]
    InvalidMap(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid phrase {phrase:?}: {reason}")]
    InvalidPhrase { phrase: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("non-finite loss in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training data has no samples of class {0}")]
    MissingClass(String),

    #[error("out-of-vocabulary words: {0:?}")]
    OutOfVocabulary(Vec<String>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
