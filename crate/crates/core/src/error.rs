//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library and CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A NaN or infinity showed up where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Gating or responsibilities were requested before the batch
    /// normalizer estimates were populated.
    #[error("normalizer estimates not populated; refresh them from an environment batch first")]
    StaleNormalizers,

    /// Checkpoint file is missing, corrupt, or inconsistent with the config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Text parsing (config files, logs, stores) failed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A gradient update produced a non-finite loss and was aborted.
    #[error("update aborted: {0}")]
    UpdateAborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
