use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SnnError>;

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("non-finite input current {value} at neuron {index}")]
    NonFiniteInput { index: usize, value: f32 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("layer `{upstream}` emits {fan_out} spikes per step but `{downstream}` expects {fan_in}")]
    FanMismatch {
        upstream: String,
        downstream: String,
        fan_out: usize,
        fan_in: usize,
    },

    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    PixelRange { index: usize, value: f32 },

    #[error("ingestion error at {path}: {reason}")]
    Ingest { path: PathBuf, reason: String },

    #[error("episode sampling failed: {0}")]
    Sampling(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("reward update requires at least one scored sample")]
    EmptyTask,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
