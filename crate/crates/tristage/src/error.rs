use thiserror::Error;

/// Errors produced by the detection pipeline and its harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("insufficient samples for {context}: required {required}, available {available}")]
    InsufficientSamples {
        required: usize,
        available: usize,
        context: String,
    },

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no eligible cluster: {0}")]
    NoEligibleCluster(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("label access audit failed: {0} labeled reads inside an unsupervised training path")]
    AuditViolation(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
