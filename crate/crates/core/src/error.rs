use thiserror::Error;

/// Errors raised across the crate.
///
/// The variants follow the failure classes used throughout: bad configuration
/// (shapes, unknown keys, invalid hyperparameters), bad input data, calls made
/// in the wrong state, and I/O or serialization failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("state error: {0}")]
    State(String),
    #[error("phase 1 discovered only {found} sound clusters (need at least {required}): {report}")]
    TooFewClusters {
        found: usize,
        required: usize,
        report: String,
    },
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn input_err(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn state_err(msg: impl Into<String>) -> Error {
    Error::State(msg.into())
}
