use thiserror::Error;

/// Errors produced by model construction, integration and estimation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rate is negative ({value}) at t = {at}; set the amplification flag to allow this")]
    NegativeRate { at: f64, value: f64 },

    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {tol:.3e}")]
    QuadratureNonConvergence { achieved: f64, tol: f64 },

    #[error("step size underflow at t = {t}: system too stiff for the explicit integrator")]
    StepSizeUnderflow { t: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("intensity majorant is unbounded or non-finite on [{from}, {to}]")]
    UnboundedIntensity { from: f64, to: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
