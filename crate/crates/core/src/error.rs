use thiserror::Error;

pub type Result<T> = std::result::Result<T, TtError>;

#[derive(Debug, Error)]
pub enum TtError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid rank: {0}")]
    InvalidRank(String),

    #[error("representation is not minimal: {0}")]
    NonMinimal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(String),

    #[error("mismatched base point for tangent vectors")]
    MismatchedBase,

    #[error("constant out of admissible range: {0}")]
    OutOfRange(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TtError {
    /// Short machine-readable tag used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            TtError::InvalidShape(_) => "invalid_shape",
            TtError::DimensionMismatch(_) => "dimension_mismatch",
            TtError::IndexOutOfRange(_) => "index_out_of_range",
            TtError::InvalidRank(_) => "invalid_rank",
            TtError::NonMinimal(_) => "non_minimal",
            TtError::InvalidArgument(_) => "invalid_argument",
            TtError::SizeGuard(_) => "size_guard",
            TtError::DegenerateMeasurement(_) => "degenerate_measurement",
            TtError::MismatchedBase => "mismatched_base",
            TtError::OutOfRange(_) => "out_of_range",
            TtError::Format(_) => "format",
            TtError::Io(_) => "io",
            TtError::Json(_) => "json",
        }
    }
}
