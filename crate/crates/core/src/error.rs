use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or utility was constructed with invalid parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A derivative of higher order than the utility can supply was requested.
    #[error("capability error: derivative of order {requested} requested, only {available} available")]
    Capability { requested: usize, available: usize },

    /// A denominator such as `U_xx` vanished.
    #[error("singularity: {0}")]
    Singularity(String),

    /// The second wealth derivative is non-negative where a portfolio is formed.
    #[error("concavity lost: {0}")]
    NonConcave(String),

    /// The Monte Carlo engine produced a non-finite state.
    #[error("simulation produced a non-finite state on path {path} at step {step}")]
    Simulation { path: usize, step: usize },

    /// Input data to a statistical routine is unusable.
    #[error("evaluation error: {0}")]
    Evaluation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
