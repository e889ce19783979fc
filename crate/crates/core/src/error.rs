use crate::qstate::Representation;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("representation mismatch: expected {expected:?}, found {found:?}")]
    Representation {
        expected: Representation,
        found: Representation,
    },

    #[error("degenerate branch: weight {0:e} is below the renormalization threshold")]
    DegenerateBranch(f64),

    #[error("numerical corruption: {0}")]
    NumericalCorruption(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Config(_) | Error::Capacity(_) | Error::Representation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
