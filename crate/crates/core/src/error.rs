use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum AscError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("correspondence required: dissimilarity datasets need an explicit train/test correspondence")]
    CorrespondenceRequired,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("cost family `{family}` cannot be built on a {kind} dataset")]
    WrongDatasetKind { family: &'static str, kind: &'static str },

    /// The hypothesis class is too large to enumerate.
    #[error("budget exceeded: k^n = {k}^{n} entries exceeds the budget of {budget}; use the sampled engine or multistart local search")]
    BudgetExceeded { n: usize, k: usize, budget: u64 },

    #[error("infeasible codebook: {0}")]
    Codebook(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AscError>;
