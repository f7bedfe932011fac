use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("failing invariants: {}", .0.join(", "))]
    Contract(Vec<String>),
    #[error(transparent)]
    Core(#[from] subq_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            _ => 1,
        }
    }
}
