//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code classes: data problems
/// ([`Error::Parse`], [`Error::Domain`], [`Error::Io`], [`Error::Json`]),
/// numeric/convergence failures ([`Error::Numeric`],
/// [`Error::NonConvergence`]) and threshold-selection failures
/// ([`Error::Selection`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(
        "Newton iteration did not converge after {iterations} iterations \
         (gradient max-norm {gradient_norm:.3e}, last beta {last_beta:?})"
    )]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last_beta: Vec<f64>,
    },

    #[error("selection error: {0}")]
    Selection(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric(message.into())
    }

    pub fn selection(message: impl Into<String>) -> Self {
        Error::Selection(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
