//! Batch front end: configuration, subcommands and artifact emission.
//!
//! Exit codes: 0 success, 1 validation-suite failure, 2 solver convergence
//! failure, 3 precondition rejection, 4 configuration or I/O error.

pub mod commands;
pub mod config;
pub mod suites;

use edflow_core::Error as CoreError;
use thiserror::Error;

pub use config::{parse_config, parse_str, ConfigError, InitialData, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONVERGENCE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Exit code for a core solver error.
pub fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::ConvergenceFailure { .. } => EXIT_CONVERGENCE,
        CoreError::NonPositiveConformalFactor { .. }
        | CoreError::NonPositiveDiffusivity { .. }
        | CoreError::WindowTooNarrow { .. }
        | CoreError::ZeroEigenvalue
        | CoreError::SmallGap { .. }
        | CoreError::ParameterTooSmall { .. }
        | CoreError::PositivityLoss { .. }
        | CoreError::NoSimpleEigenvalue { .. } => EXIT_PRECONDITION,
        CoreError::InvalidGrid(_)
        | CoreError::InvalidField(_)
        | CoreError::GridMismatch
        | CoreError::GridTooLarge { .. }
        | CoreError::Format(_)
        | CoreError::Io(_) => EXIT_CONFIG,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Core(e) => core_exit_code(e),
        }
    }
}

/// Variant name of a core error, e.g. `NoSimpleEigenvalue`.
pub fn error_kind(e: &CoreError) -> String {
    let dbg = format!("{e:?}");
    dbg.chars().take_while(|c| c.is_ascii_alphanumeric()).collect()
}
