use thiserror::Error;

/// Errors raised by the analytical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{func}: argument outside domain ({detail})")]
    Domain { func: &'static str, detail: String },

    #[error("quadrature did not converge: estimate {estimate:e} with error {error:e} (tolerance {tolerance:e})")]
    QuadratureNonConvergence {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },

    #[error("fixed-point SNR iteration did not converge within {iterations} iterations (last step {residual:e})")]
    SolverNonConvergence { iterations: u32, residual: f64 },

    #[error("bisection bracket [{lo}, {hi}] does not enclose the target error {target:e}")]
    Bracket { lo: f64, hi: f64, target: f64 },

    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        func,
        detail: detail.into(),
    }
}
