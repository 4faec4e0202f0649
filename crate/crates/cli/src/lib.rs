//! File formats, worker pool and subcommands of the `lz3` binary.
//!
//! The numerics live in `lz3-core`; this crate reads JSON run configurations,
//! fans independent trajectories out over threads and writes CSV/JSON.

pub mod commands;
pub mod config;
pub mod output;
pub mod pool;

pub use config::RunConfig;

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for configuration and validation errors.
pub const EXIT_INVALID: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_INVALID,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<lz3_core::Error> for CliError {
    fn from(e: lz3_core::Error) -> Self {
        match e {
            lz3_core::Error::InvalidParameter(_) => CliError::Validation(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}
