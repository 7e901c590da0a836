use alloc::string::String;

/// Error type shared by every module in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward requires a scalar loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("batch size {requested} exceeds domain size {available}")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid plan: {0}")]
    PlanInvalid(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
