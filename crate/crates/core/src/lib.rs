//! Geometric time integration for the pseudospectrally discretised
//! semilinear wave equation
//!
//! ```text
//! u_tt - u_xx + rho * u + g(u) = 0,   x in [-pi, pi] periodic
//! ```
//!
//! The crate provides one-stage explicit extended Runge–Kutta–Nyström
//! (ERKN) steppers, the Strang-splitting sub-flows and the trigonometric
//! integrator they generate, grid-sampled checks of the symmetry and
//! symplecticity conditions, conserved/modified functionals, and an
//! experiment harness driven by the `erkn` binary.

pub mod diagnostics;
pub mod error;
pub mod filters;
pub mod harness;
pub mod integrators;
pub mod methods;
pub mod spectral;

pub use error::{Error, Result};
pub use methods::ErknCoefficients;
pub use spectral::{Nonlinearity, SpectralState, WaveProblem};
