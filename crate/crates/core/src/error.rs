use thiserror::Error;

/// Errors produced across the crate.
#[derive(Error, Debug)]
pub enum FpeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("inconsistent state: {0}")]
    State(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FpeError>;

impl FpeError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        FpeError::Shape(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        FpeError::Input(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        FpeError::Format {
            offset,
            msg: msg.into(),
        }
    }
}
