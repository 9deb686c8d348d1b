use std::path::PathBuf;

/// Errors produced by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("mesh validation failed: {0}")]
    Validation(String),

    #[error("non-finite value in element {element}, quadrature point {point}: {value}")]
    Numeric {
        element: usize,
        point: usize,
        value: f64,
    },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("step {step}: {source}")]
    Stepping {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("optimization failed at iteration {iteration}: {source}")]
    Optimization {
        iteration: usize,
        #[source]
        source: Box<Error>,
        /// Records of the iterations completed before the failure.
        history: Vec<crate::optimizer::IterationRecord>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Stepping {
            step,
            source: Box::new(self),
        }
    }

    /// True if the root cause is a linear-solver or numeric failure.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Solver { .. } | Error::Numeric { .. } => true,
            Error::Stepping { source, .. } | Error::Optimization { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
