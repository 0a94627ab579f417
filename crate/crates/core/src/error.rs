use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("hermitian symmetry violated: relative residual {residual:e} exceeds {tolerance:e}")]
    SymmetryViolation { residual: f64, tolerance: f64 },

    #[error("filter is singular at xi = {xi}")]
    SingularFilter { xi: f64 },

    #[error("filter singular at mode j = {mode} (xi = {xi})")]
    SingularMode { mode: i64, xi: f64 },

    #[error("coefficients inconsistent with the splitting form at xi = {xi}: residual {residual:e}")]
    InconsistentCoefficients { xi: f64, residual: f64 },

    #[error("grid has {points} points; at least {required} are needed for a verdict")]
    InsufficientGrid { points: usize, required: usize },

    #[error("symplecticity constant is indeterminate: no well-conditioned grid point")]
    Indeterminate,

    #[error("method `{0}` is not symmetric; the splitting composition is only defined for symmetric methods")]
    NotSymmetric(String),

    #[error("non-finite state after step {step}")]
    BlowUp { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
