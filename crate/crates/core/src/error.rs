use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested state space or digraph exceeds the configured cap.
    #[error("resource cap exceeded: {what} has {size} elements, cap is {cap}")]
    ResourceCap {
        what: &'static str,
        size: u128,
        cap: u128,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("index {index} out of range for {len} elements")]
    OutOfRange { index: u128, len: u128 },

    #[error("displacement components sum to {0}, expected 0")]
    InvalidDisplacement(i64),

    #[error("mismatched dimensions: {0}")]
    Mismatch(String),

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    /// A single time step exceeded the round safety cap.
    #[error("time step did not terminate within {0} rounds")]
    RoundCap(u64),

    #[error("empty run: {0}")]
    EmptyRun(String),

    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
