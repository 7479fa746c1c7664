use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported tensor order {0} (expected 1..=4)")]
    UnsupportedOrder(usize),
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("rank {rank} out of range (must be in 1..={max})")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("solver diverged at iteration {iteration} in step {step}")]
    Diverged { iteration: usize, step: &'static str },
    #[error("invalid clustering: {0}")]
    InvalidClustering(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used by the CLI and the C API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnsupportedOrder(_) => "unsupported_order",
            Error::ModeOutOfRange { .. } => "mode_out_of_range",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::RankOutOfRange { .. } => "rank_out_of_range",
            Error::NonFinite => "non_finite",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NotPowerOfTwo(_) => "not_power_of_two",
            Error::Diverged { .. } => "diverged",
            Error::InvalidClustering(_) => "invalid_clustering",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
