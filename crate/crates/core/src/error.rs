use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point lies outside the domain of the objective")]
    Infeasible,

    #[error("subspace index {k} out of range (decomposition has {count} subspaces)")]
    SubspaceIndex { k: usize, count: usize },

    #[error("missing local correction for subspace {0}")]
    MissingSubspace(usize),

    #[error("local operator of subspace {k} is singular")]
    SingularOperator { k: usize },

    #[error("gradient perturbation {perturbation:e} exceeds the bound {bound:e}")]
    PerturbationBound { perturbation: f64, bound: f64 },

    #[error("predicted reduction must be positive, got {0:e}")]
    NonPositivePrediction(f64),

    #[error("the trust-region strategy requires a non-overlapping decomposition")]
    OverlapUnsupported,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("task {k} panicked: {message}")]
    TaskPanicked { k: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
