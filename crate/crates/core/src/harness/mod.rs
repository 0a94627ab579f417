//! Experiment drivers behind the `erkn` binary.
//!
//! Every command writes human-readable progress to a caller-supplied
//! writer and its data files under the configured output directory.

mod commands;
mod config;

pub use commands::{
    cmd_check, cmd_compose_verify, cmd_converge, cmd_resonance, cmd_run, format_value, CompositionOutcome, MethodOrder,
    RunSummary, CONVERGENCE_TIME, CSV_HEADER, EXACT_RELATIVE_ERROR,
};
pub use config::{load_coefficients, resolve_method, ExperimentConfig, DEFAULT_HORIZON, FULL_HORIZON, INITIAL_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for usage and configuration problems, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Runtime(_) | Self::Io(_) => 1,
        }
    }
}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::NotSymmetric(_) | E::InvalidProblem(_) | E::InvalidArgument(_) | E::LengthMismatch { .. } => {
                Self::Usage(e.to_string())
            }
            other => Self::Runtime(other.to_string()),
        }
    }
}
