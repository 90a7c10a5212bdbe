//! Error taxonomy shared by every module in the crate.
//!
//! The CLI maps these variants onto process exit codes, so the split between
//! variants mirrors the failure classes a caller can react to: bad
//! configuration, bad runtime input, numerical blow-ups, and broken artifacts
//! on disk.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. Always names the field.
    #[error("invalid config: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    /// A config file or config override could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// A runtime input (action, observation, batch) is malformed.
    #[error("invalid input: {0}")]
    Input(String),

    /// Tensor or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was attempted in a state that cannot support it.
    #[error("invalid state: {0}")]
    State(String),

    /// A non-finite value surfaced in a loss, gradient, or distribution
    /// parameter. `context` pins down where (e.g. epoch/iteration).
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    /// A checkpoint file is missing, truncated, or fails validation.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A CSV artifact is missing or malformed.
    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Helper for the common "field violates invariant" construction.
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config { field, reason: reason.into() }
    }

    /// Helper for numerical failures.
    pub fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical { context: context.into(), detail: detail.into() }
    }
}
