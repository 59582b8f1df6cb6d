use std::path::PathBuf;

use entangleometer_core::Error as CoreError;
use serde_json::json;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Stable process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CoreError::DegenerateSweep(_))
            | CliError::Core(CoreError::InsufficientData { .. })
            | CliError::Core(CoreError::IllConditioned(_)) => EXIT_DEGENERATE,
            CliError::Core(CoreError::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            _ => EXIT_CONFIG,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                CoreError::InvalidInput(_) => "invalid_input",
                CoreError::NonUnitary { .. } => "non_unitary",
                CoreError::InvalidPlan(_) => "invalid_plan",
                CoreError::DegenerateSweep(_) => "degenerate_sweep",
                CoreError::NonConvergence { .. } => "non_convergence",
                CoreError::InsufficientData { .. } => "insufficient_data",
                CoreError::IllConditioned(_) => "ill_conditioned",
                CoreError::Parse(_) => "parse",
                CoreError::Io(_) => "io",
                CoreError::Json(_) => "json",
            },
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
