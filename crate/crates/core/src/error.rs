use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data failed a structural validation (non-stochastic rows, bad dimensions, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    /// The graph or matrix lacks a structural property the operation needs
    /// (strong connectivity, SIA pattern).
    #[error("structure error: {0}")]
    Structure(String),

    /// A randomized generator gave up after its retry budget.
    #[error("generation failed: {0}")]
    Generation(String),

    /// An iterative procedure did not reach its tolerance.
    #[error("no convergence: {message} (achieved gap {gap:e})")]
    Convergence { message: String, gap: f64 },

    /// A row of the communication matrix could not be normalized.
    #[error("degenerate distribution for agent {agent}: {reason}")]
    Degenerate { agent: usize, reason: String },

    /// Dimension mismatch between two operands.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The normal matrix of the least-squares problem is singular.
    #[error("rank deficient normal matrix")]
    Rank,

    /// A loss oracle produced a non-finite value during a round.
    #[error("non-finite oracle output at round {round}, agent {agent}")]
    NonFinite { round: usize, agent: usize },

    /// I/O or parse failure in one of the text formats.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
