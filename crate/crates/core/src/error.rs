//! Error type shared across the toolkit.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data: unparseable lines, non-finite values, rewards
    /// outside `[0, 1]`, inconsistent table files.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid configuration such as `tau` outside `(0, 1]` or an empty
    /// learning-rate list.
    #[error("configuration error: {0}")]
    Config(String),

    /// An estimation operation was asked to run on unusable data
    /// (typically an empty dataset).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// SGD produced a non-finite weight at the given learning rate.
    #[error("training error at learning rate {rate}: {msg}")]
    Training { rate: f64, msg: String },

    /// A policy could not produce an action (empty candidate set).
    #[error("policy error: {0}")]
    Policy(String),

    /// A brute-force computation exceeds its enumeration guard.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A numeric argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
