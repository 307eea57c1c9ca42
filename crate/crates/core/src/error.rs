use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not converge on [{lower}, {upper}]: estimated error {achieved:e} exceeds target {target:e} after {subdivisions} subdivisions")]
    QuadratureNonConvergence {
        lower: f64,
        upper: f64,
        achieved: f64,
        target: f64,
        subdivisions: usize,
    },

    #[error("invalid frequency: {0}")]
    InvalidFrequency(String),

    #[error("square-root branch is ambiguous for argument {re} + {im}i")]
    BranchAmbiguity { re: f64, im: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("near-field image factor diverges: |wp^2 - 2 w0^2| / wp^2 = {relative_gap:e} is below the resonance guard")]
    PlasmonResonance { relative_gap: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported emitter count: {0}")]
    EmitterCount(String),

    #[error("coupling matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("integration unstable at t = {time}: trace drift {trace_drift:e}")]
    Unstable { time: f64, trace_drift: f64 },

    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
