use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("arity must be at least 2, got {0}")]
    ArityTooSmall(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("outcome index {index} out of range (domain has {size} outcomes)")]
    OutcomeOutOfRange { index: usize, size: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("design matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("degenerate evidence for record `{0}`")]
    DegenerateEvidence(String),

    #[error("outcome {0} already answered")]
    RepeatedOutcome(usize),

    #[error("EM failed: {0}")]
    EmFailed(String),

    #[error("model/domain mismatch: {0}")]
    Mismatch(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
