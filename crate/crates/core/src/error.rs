use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("unknown kernel `{0}` (expected one of exp, tri, box, rat2, cauchy)")]
    UnknownKernel(String),

    #[error("unknown velocity model `{0}` (expected one of linear, quadratic)")]
    UnknownVelocity(String),

    #[error("kernel tail mass {remaining:e} still above tolerance {tol:e} after {cap} weights")]
    TruncationFailure { remaining: f64, tol: f64, cap: usize },

    #[error("CFL condition violated: lambda * sup W' = {courant} > 1")]
    CflViolation { courant: f64 },

    #[error("vehicle ordering violated at index {index}: gap {gap} < vehicle length {ell}")]
    OrderingViolation { index: usize, gap: f64, ell: f64 },

    #[error("positions must be strictly increasing (index {index})")]
    NonMonotonePositions { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("flux f(rho) = rho V(rho) is not unimodal on [0, 1]")]
    NonUnimodalFlux,

    #[error("kernel `{0}` has no classical derivative")]
    NonDifferentiableKernel(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
