use thiserror::Error;

/// Errors raised by generation, fitting and benchmarking.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite linear predictor at row {row}")]
    NonFiniteLinearPredictor { row: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The likelihood is flat in (or cannot separate) the given design column.
    #[error("model not identifiable: {reason}")]
    NonIdentifiable { column: Option<usize>, reason: String },

    #[error("quasi-complete separation detected (coefficient {column}, |beta| = {value:.3} on standardized scale)")]
    Separation { column: usize, value: f64 },

    /// Monotone likelihood: a coefficient ran past the divergence threshold.
    #[error("coefficient {column} diverged (|beta| = {value:.3})")]
    Divergence { column: usize, value: f64 },

    #[error("information matrix is singular")]
    Singular,

    #[error("no convergence after {iterations} iterations")]
    Convergence { iterations: usize, last: Vec<f64> },

    #[error("non-finite value while evaluating {0}")]
    Evaluation(&'static str),

    #[error("degenerate lambda path: {0}")]
    DegeneratePath(String),

    #[error("no valid cross-validation fold assignment after {attempts} attempts")]
    FoldFailure { attempts: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
