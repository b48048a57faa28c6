use std::io;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Oram(#[from] pyramid_oram::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("insufficient data: {total} events for {bins} bins (need at least {needed})")]
    InsufficientData { total: u64, bins: usize, needed: u64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
