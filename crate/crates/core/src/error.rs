use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} at cell {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("negative density {value} at cell {index}")]
    Negative { index: usize, value: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("singular point: {0}")]
    Singular(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("memory budget exceeded: {cells} cells requested, budget {budget}")]
    MemoryBudget { cells: usize, budget: usize },

    #[error("solvability: {0}")]
    Solvability(String),

    #[error("mass drift {drift:e} exceeds tolerance {tol:e}")]
    MassDrift { drift: f64, tol: f64 },

    #[error("stability: {0}")]
    Stability(String),

    #[error("energy increased by {increase:e} at step {step} (tolerance {tol:e})")]
    EnergyIncrease { step: usize, increase: f64, tol: f64 },

    #[error("density concentrated beyond grid resolution at step {step}: {detail}")]
    Concentration { step: usize, detail: String },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
