use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EchoError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("matrix is not symplectic (defect {defect:.3e} > tolerance {tol:.1e})")]
    NotSymplectic { defect: f64, tol: f64 },

    #[error("singular matrix in {0}")]
    SingularMatrix(&'static str),

    #[error("caustic: determinant vanishes at path index {index}")]
    Caustic { index: usize },

    #[error("branch continuation step too large at path index {index} (relative step {step:.3}); refine the path")]
    RefinementRequired { index: usize, step: f64 },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("model evaluation produced a non-finite value at t = {time}")]
    ModelEvaluation { time: f64 },

    #[error("no turning points found at energy {energy}: orbit is not confined")]
    NonConfining { energy: f64 },

    #[error("energy {energy} is a critical value: orbit is singular")]
    SingularOrbit { energy: f64 },

    #[error("det(I + F) vanishes: F has eigenvalue -1, smooth Weyl symbol undefined")]
    EigenvalueMinusOne,

    #[error("energy window contains no levels")]
    NoLevels,

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("all wavepacket cutoff weights vanish")]
    EmptyPacket,

    #[error("invalid truncation order {0}, expected 1, 2 or 3")]
    InvalidOrder(u8),

    #[error("Poisson resummation requires the Gaussian cutoff")]
    UnsupportedCutoff,

    #[error("invalid collapse-window exponents: {0}")]
    InvalidExponents(String),

    #[error("degenerate collapse window [{lower}, {upper}]")]
    DegenerateWindow { lower: f64, upper: f64 },

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("grid domain: {0}")]
    Domain(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("eigensolver truncation: {0}")]
    Truncation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, EchoError>;
