use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CosmosError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CosmosError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl CosmosError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CosmosError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            CosmosError::Io { .. } => "io",
            CosmosError::Csv(_) => "csv",
            CosmosError::Json(_) => "json",
            CosmosError::Config(_) => "config",
            CosmosError::Schema(_) => "schema",
            CosmosError::Format(_) => "format",
            CosmosError::InsufficientData(_) => "insufficient_data",
            CosmosError::InvalidInput(_) => "invalid_input",
        }
    }
}
