//! Command implementations behind the `acfc` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// Failure or non-convergence of a simulation.
    #[error("{0}")]
    Run(String),
    /// A design rule failed under `--strict`.
    #[error("{0}")]
    Strict(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Run(_) => 2,
            CliError::Strict(_) => 3,
        }
    }
}

impl From<acfc_core::Error> for CliError {
    fn from(e: acfc_core::Error) -> Self {
        use acfc_core::Error as E;
        match e {
            E::InvalidParameter { .. } | E::InvalidRange(_) | E::Domain { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Run(e.to_string()),
        }
    }
}
