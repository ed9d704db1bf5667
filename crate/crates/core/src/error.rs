use thiserror::Error;

/// Errors raised while building inputs, fitting metamodels or computing indices.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("all responses are equal; nothing to learn")]
    ConstantResponse,

    #[error("test sample has zero variance")]
    ZeroTestVariance,

    #[error("predictor variance {0:e} is too small for a Sobol decomposition")]
    ConstantPredictor(f64),

    #[error("variance term for input {input} is negative beyond round-off ({value:e})")]
    NegativeVariance { input: usize, value: f64 },

    #[error("quadrature did not converge at {n_nodes} nodes; worst entry {entry} changed by {change:e}")]
    QuadratureNotConverged {
        n_nodes: usize,
        entry: String,
        change: f64,
    },

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model document: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
