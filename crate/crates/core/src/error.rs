//! Error type shared by every module of the laboratory.

use thiserror::Error;

/// Failure categories. The CLI maps each variant to a distinct exit code.
#[derive(Debug, Error)]
pub enum KrlError {
    /// A precondition on an input value was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative solver failed to converge.
    #[error("convergence failure in {solver}: {detail}")]
    Convergence { solver: &'static str, detail: String },

    /// The evolving state left the admissible set (negative density, CFL, ...).
    #[error("corrupted state at t={time}: {detail}")]
    CorruptedState { time: f64, detail: String },

    /// Configuration text could not be parsed or referenced unknown keys.
    #[error("config error: {0}")]
    Config(String),

    /// An observer registered with the time stepper failed.
    #[error("observer failed at step {step} (t={time}): {source}")]
    Observer { step: usize, time: f64, source: Box<KrlError> },

    /// Filesystem or format failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl KrlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KrlError::InvalidInput(msg.into())
    }

    /// Process exit code for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            KrlError::InvalidInput(_) => 2,
            KrlError::Convergence { .. } => 3,
            KrlError::CorruptedState { .. } => 4,
            KrlError::Config(_) => 5,
            KrlError::Io(_) => 6,
            KrlError::Observer { source, .. } => source.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KrlError>;
