use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("instability detected at t = {time} (step {step})")]
    Instability { step: usize, time: f64 },

    #[error("no convergence after {iterations} iterations (last sup-norm change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerics (instability, divergence, singular solves) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Instability { .. } | Error::NoConvergence { .. } | Error::SingularSystem { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
