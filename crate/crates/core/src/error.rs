use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sparsity {s} out of range: {reason}")]
    Sparsity { s: usize, reason: String },

    #[error("degenerate sampling: dictionary element {index} has zero energy on the sample set")]
    DegenerateSampling { index: usize },

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("column {index} is not unit-normalized (norm {norm})")]
    NotNormalized { index: usize, norm: f64 },

    #[error("sparsity {s} is not admissible: requires s < {sbar} (mutual coherence {mu})")]
    Inadmissible { s: usize, sbar: f64, mu: f64 },

    #[error("schedule is not contractive: rho = {rho} >= 1")]
    NonContractive { rho: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("search space too large: {count} candidates exceeds limit {limit}; {hint}")]
    TooLarge { count: f64, limit: f64, hint: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
