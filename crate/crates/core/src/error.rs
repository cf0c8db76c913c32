use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqtError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("factor index {index} out of range for {len} factors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("map is not trace non-increasing (violation {0:.3e})")]
    NotCptni(f64),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("latent configuration has no entry for pair ({0}, {1})")]
    MissingPair(String, String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("arity mismatch: {0}")]
    ArityMismatch(String),

    #[error("noisy permutation not in reduced form: fresh wire {wire} is traced")]
    ReducedFormViolation { wire: usize },

    #[error("system mismatch: expected {expected}, got {got}")]
    SystemMismatch { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, LqtError>;
