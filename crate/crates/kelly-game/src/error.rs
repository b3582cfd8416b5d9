//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GameError>;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("expected {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("agent index {index} out of range for {len} agents")]
    AgentIndex { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("bid {bid} for agent {agent} outside [{min}, {max}]")]
    InfeasibleBid {
        agent: usize,
        bid: f64,
        min: f64,
        max: f64,
    },

    #[error("allocation {0} outside (0, 1)")]
    AllocationOutOfRange(f64),

    #[error("allocation vector outside the feasible simplex slice: {0}")]
    OutsideSimplex(String),

    #[error("opponent aggregate must be nonnegative, got {0}")]
    NegativeAggregate(f64),

    #[error("matrix is {rows}x{cols}, need square")]
    NonSquareMatrix { rows: usize, cols: usize },

    #[error("unsupported for this game: {0}")]
    Unsupported(String),
}
