use thiserror::Error;

/// Errors surfaced by the lab's exact machinery.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An MDP tuple violated a structural invariant (row sums, gamma range, ...).
    #[error("invalid mdp: {0}")]
    InvalidMdp(String),
    /// A construction or operation was called with parameters outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    /// Shapes of two coupled objects disagree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// The occupancy linear system has no unique solution.
    #[error("singular occupancy system (malformed transition matrix?)")]
    SingularSystem,
    /// A KL divergence is infinite because of a support violation.
    #[error("infinite KL divergence at state {state}: q has zero mass where p does not")]
    InfiniteKl { state: usize },
    /// A grid is too coarse to resolve a construction.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
