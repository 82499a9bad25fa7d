use thiserror::Error;

/// Errors produced by the detection pipeline and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample point ({x:.3}, {y:.3}) is outside the sampleable interior")]
    OutOfBounds { x: f64, y: f64 },

    #[error("innovation covariance is numerically singular (condition number {0:.3e})")]
    DegenerateUpdate(f64),

    #[error("segment has zero extent")]
    DegenerateSegment,

    #[error("segment file does not match the expected schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
