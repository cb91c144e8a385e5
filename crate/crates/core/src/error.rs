use std::path::PathBuf;

/// Errors produced by the planning, simulation and measurement pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("width at sample {index} is not positive ({value})")]
    NonPositiveWidth { index: usize, value: f64 },

    #[error("stroke needs at least {min} samples, got {actual}")]
    TooFewSamples { min: usize, actual: usize },

    #[error("non-finite coordinate at sample {index}")]
    NonFinite { index: usize },

    #[error("no finite-difference tangent at sample {index}")]
    DegenerateTangent { index: usize },

    #[error("tool tip has zero plane offset; footprint is degenerate")]
    DegenerateTip,

    #[error("invalid tool tip: {0}")]
    InvalidTip(String),

    #[error("calibration depth list is empty")]
    EmptyDepths,

    #[error("regressor matrix is rank deficient (all penetrations equal)")]
    RankDeficient,

    #[error("trajectory never penetrates the surface")]
    NoContact,

    #[error("query ({x}, {y}) lies outside the surface grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("initial state violates the state constraints")]
    InfeasibleStart,

    #[error("footprint at step {step} exceeds the canvas bounds")]
    CanvasOverflow { step: usize },

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration/input problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) | Error::Format { .. } => 2,
            Error::LengthMismatch { .. }
            | Error::NonPositiveWidth { .. }
            | Error::TooFewSamples { .. }
            | Error::NonFinite { .. }
            | Error::InvalidTip(_)
            | Error::EmptyDepths
            | Error::InvalidParameter(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
