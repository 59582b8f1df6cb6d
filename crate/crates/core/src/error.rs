use thiserror::Error;

/// Errors raised across the simulator and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operator is not unitary (max |U†U - I| = {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),

    /// The measured counts carry no information about the retardance.
    #[error("degenerate sweep: {0}")]
    DegenerateSweep(String),

    #[error("fit did not converge after {iterations} iterations (scaled gradient {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },

    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("ill-conditioned reconstruction: {0}")]
    IllConditioned(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
