//! Experiment runner for the oxytaxis control problem: uncontrolled runs,
//! optimal control, perturbation probes, gradient checks and convergence
//! studies, all driven by flat config files.

pub mod commands;
pub mod config;
pub mod output;

use oxytaxis_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let root = root_cause(&e);
        let msg = e.to_string();
        match root {
            Error::Io { .. } => CliError::Io(msg),
            Error::InvalidArgument(_) | Error::Format { .. } | Error::Validation(_) => CliError::Config(msg),
            _ => CliError::Solver(msg),
        }
    }
}

fn root_cause(e: &Error) -> &Error {
    match e {
        Error::Stepping { source, .. } | Error::Optimization { source, .. } => root_cause(source),
        other => other,
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
