//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("eigenvalue on evaluation circle")]
    ResolventSingular,
    #[error("closed loop not Schur")]
    NotSchur,
    #[error("prior uncertainty too large for exploration guarantees (gamma_v1 = {0:.4})")]
    UncertaintyTooLarge(f64),
    #[error("performance target unreachable")]
    Unreachable,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that signal an infeasible design rather than a fault.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_) | Error::Unreachable | Error::UncertaintyTooLarge(_))
    }
}
