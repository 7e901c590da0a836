use dtcs_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("run {run_id}: {message}")]
    Run { run_id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        LabError::Format { path: path.display().to_string(), message: message.into() }
    }
}
