use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid coordinate {token:?}: {reason}")]
    Coordinate { token: String, reason: &'static str },

    #[error("scaler bounds invalid: max ({max}) must exceed min ({min})")]
    InvalidBounds { min: f64, max: f64 },

    #[error("constant feature {feature:?}: standard deviation is zero")]
    ConstantFeature { feature: String },

    #[error("zero-length vector has no direction")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown storm id {0}")]
    UnknownStorm(String),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("no scaler available for {0}")]
    MissingScaler(String),

    #[error("non-finite input value")]
    NonFinite,

    #[error("artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
