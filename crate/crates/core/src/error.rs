use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparError {
    #[error("value outside the link domain at index {index}: {value}")]
    Domain { index: usize, value: f64 },

    #[error("singular system in weighted least squares step; retry with a positive ridge penalty")]
    Singular,

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid response for {family} family at index {index}: {value}")]
    InvalidResponse {
        family: &'static str,
        index: usize,
        value: f64,
    },

    #[error("cross-validation failed: {0}")]
    Cv(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("unsupported model format version {found} (reader supports major version {supported})")]
    Version { found: String, supported: u32 },

    #[error("invalid model file: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SparError>;

impl SparError {
    /// Process exit code: 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            SparError::Config(_) => 2,
            SparError::Singular | SparError::Numerical(_) | SparError::Cv(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SparError::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        SparError::Shape(msg.into())
    }
}
