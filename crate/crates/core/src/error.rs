use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong inside the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {z} lies outside the open unit disc")]
    Domain { z: Complex64 },

    #[error("evaluation at {z} hits a singularity")]
    Singularity { z: Complex64 },

    #[error("degenerate Möbius map: ad - bc = 0")]
    DegenerateMobius,

    #[error("trajectory escaped the disc (|w| = {modulus}) at t = {t}")]
    Escape { t: f64, modulus: f64 },

    #[error("integrator step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize },

    #[error("conformal inverse failed to converge for w = {w}")]
    Inverse { w: Complex64 },

    #[error("invalid flow model: {0}")]
    Model(String),

    #[error("radial limit did not converge (last increment {last_increment:e})")]
    NoConvergence { last_increment: f64 },

    #[error("quadrature failed to converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },

    #[error("repeated zero {z} in a product that requires simple zeros")]
    Multiplicity { z: Complex64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("sequence is not interpolating (delta = {delta:e})")]
    Interpolation { delta: f64 },

    #[error("case mismatch: {0}")]
    CaseMismatch(String),

    #[error("depth exceeded at level {level}: {reason}")]
    DepthExceeded { level: usize, reason: String },

    #[error("angle equation has no root bracketed at level {level}")]
    Bisection { level: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
