use thiserror::Error;

/// Errors produced by the rating engine.
#[derive(Debug, Error)]
pub enum RatingError {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown model id: {0}")]
    UnknownModel(String),

    #[error("unknown task: {0}")]
    UnknownTask(String),

    #[error("missing feature column '{0}' in strict mode")]
    MissingFeature(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("operation unsupported for this likelihood: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RatingError>;
