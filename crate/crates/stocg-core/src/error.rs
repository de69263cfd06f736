//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an interface contract (wrong dimension, bad argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A map or oracle produced a non-finite value; the level index is 1-based.
    #[error("numerical domain error at level {level}: {detail}")]
    NumericalDomain { level: usize, detail: String },

    /// Invalid configuration (bad problem/algorithm pairing, missing constants, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data unusable for the requested statistic.
    #[error("data error: {0}")]
    Data(String),

    /// Too few replications for the requested statistical procedure.
    #[error("statistical power error: {0}")]
    StatisticalPower(String),

    /// An internal invariant failed; indicates a solver bug, not user error.
    #[error("internal invariant failure: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn non_finite(level: usize, detail: impl Into<String>) -> Self {
        Error::NumericalDomain {
            level,
            detail: detail.into(),
        }
    }
}
