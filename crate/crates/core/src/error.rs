use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size overflow: {what} needs {needed}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("infeasible marginals (best residual {best_residual:.3e})")]
    Infeasible { best_residual: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("no solution in range: {0}")]
    NoSolution(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
