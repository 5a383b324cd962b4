use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("malformed profile: {0}")]
    MalformedProfile(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("reward not applicable: {0}")]
    Reward(String),

    #[error("reward history still in warmup ({recorded}/{window} entries)")]
    Warmup { recorded: usize, window: usize },

    #[error("degradation out of bounds: {0}")]
    Degradation(String),

    #[error("invalid noise level: {0}")]
    NoiseLevel(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Json(_))
    }
}
