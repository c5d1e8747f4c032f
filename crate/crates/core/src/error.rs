//! Error type shared by every module of the crate.
//!
//! Errors split into two families mirrored by the CLI exit codes:
//! configuration/validation problems (exit 1) and numerical failures
//! encountered mid-computation (exit 2).

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model configuration or operation parameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A control vector lies outside the model's control box.
    #[error("control component {axis} = {value} outside control box [{lo}, {hi}]")]
    ControlOutsideBox {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// An operation received an empty grid.
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    /// Every scanned point was infeasible (numerical failure).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A simulated path left the representable range.
    #[error("non-finite state on path {path} at step {step}")]
    NonFiniteState { path: usize, step: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Convenience constructor for configuration errors.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// CLI exit code associated with this error: 1 for validation
    /// problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::NonFiniteState { .. } => 2,
            _ => 1,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
