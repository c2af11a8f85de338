use thiserror::Error;

use crate::comparison::ScalarTrajectory;
use crate::system::VectorTrajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature ran out of subdivision depth.
    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate} with error {error}")]
    Accuracy {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    /// The theorem's route does not apply to this data; `suggestion` names the
    /// bound that should be used instead.
    #[error("certificate route inapplicable: {reason}; {suggestion}")]
    Inapplicable { reason: String, suggestion: String },

    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Integrator failures. Both variants carry everything computed up to the
/// failure point.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("comparison solver step size underflow at t = {t}")]
    ScalarUnderflow {
        t: f64,
        partial: Box<ScalarTrajectory>,
    },

    #[error("system solver step size underflow at t = {t}")]
    VectorUnderflow {
        t: f64,
        partial: Box<VectorTrajectory>,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
