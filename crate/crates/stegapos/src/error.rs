//! Crate-wide error type.
//!
//! Errors carry the name of the subsystem that raised them so that callers
//! (and the CLI) can print a module-qualified, machine-parseable line.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid static configuration (bad code spec, bad train config, ...).
    #[error("config: {0}")]
    Config(String),

    /// A caller violated an operation's contract (shape mismatch, out-of-range
    /// argument, degenerate input where a valid one is required).
    #[error("contract: {0}")]
    Contract(String),

    /// Checkpoint serialization/deserialization failure. Always names the
    /// offending entry or manifest key where one exists.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Dataset ingestion/generation failure.
    #[error("dataset: {0}")]
    Dataset(String),

    /// Training diverged or failed to meet its phase criteria.
    #[error("training: {0}")]
    Training(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }

    pub fn dataset(msg: impl Into<String>) -> Self {
        Error::Dataset(msg.into())
    }

    pub fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}
