//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the screening pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (bad JSON, bad CSV cell, bad WAV header).
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    /// Structurally valid input that violates the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Semantically invalid data (non-finite values, inconsistent shapes).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Runtime numeric failure (divergence, degenerate state).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
