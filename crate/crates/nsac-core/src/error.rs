//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid arguments to a constructor.
    #[error("config error: {0}")]
    Config(String),

    /// The nonlinear solver failed even after continuation.
    #[error("solver did not converge at step {step}: {detail}")]
    NonConvergence { step: usize, detail: String },

    /// A discrete identity that must hold on every accepted state was
    /// violated beyond tolerance. This indicates a bug, not bad data.
    #[error("identity violation in {what}: |residual| = {value:.3e} exceeds {tol:.3e}")]
    Identity { what: String, value: f64, tol: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed snapshot / mesh dump / CSV content.
    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
