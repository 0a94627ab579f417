//! Scalar filter functions of `xi = h * omega`.
//!
//! `Omega` is diagonal throughout, so every matrix function is evaluated
//! mode by mode on scalars.

use crate::error::{Error, Result};
use crate::methods::ErknCoefficients;

/// Below this `|xi|` the sinc is evaluated from its Taylor series.
pub const SINC_SERIES_THRESHOLD: f64 = 1e-4;

/// Tolerance on `|cos(xi/2) Upsilon - b1|` before a method is declared
/// inexpressible as a Strang splitting.
pub const UPSILON_CONSISTENCY_TOLERANCE: f64 = 1e-10;

/// `phi0(xi^2) = cos(xi)`.
#[inline]
pub fn phi0(xi: f64) -> f64 {
    xi.cos()
}

/// `phi1(xi^2) = sinc(xi) = sin(xi)/xi`.
#[inline]
pub fn phi1(xi: f64) -> f64 {
    if xi.abs() < SINC_SERIES_THRESHOLD {
        sinc_series(xi)
    } else {
        xi.sin() / xi
    }
}

/// Alias of [`phi1`].
#[inline]
pub fn sinc(xi: f64) -> f64 {
    phi1(xi)
}

#[inline]
pub(crate) fn sinc_series(xi: f64) -> f64 {
    let x2 = xi * xi;
    1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
}

/// `sigma(xi) = sinc(xi/2) / (2 bbar1(xi))`, the per-mode weight of the
/// modified actions, momentum and energy.
pub fn sigma_filter(coeffs: &ErknCoefficients, xi: f64) -> Result<f64> {
    let bbar = coeffs.bbar1(xi);
    if bbar == 0.0 || !bbar.is_finite() || bbar.abs() < f64::EPSILON * 1e-2 {
        return Err(Error::SingularFilter { xi });
    }
    Ok(0.5 * phi1(0.5 * xi) / bbar)
}

/// Value of the kick filter `Upsilon` together with the residual of the
/// second defining relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Upsilon {
    pub value: f64,
    pub residual: f64,
}

/// Solves `sinc(xi/2) Upsilon / 2 = bbar1(xi)` for `Upsilon` and checks
/// `cos(xi/2) Upsilon = b1(xi)`.
pub fn upsilon(coeffs: &ErknCoefficients, xi: f64) -> Result<Upsilon> {
    let s = phi1(0.5 * xi);
    if s == 0.0 || s.abs() < 1e-14 {
        return Err(Error::SingularFilter { xi });
    }
    let value = 2.0 * coeffs.bbar1(xi) / s;
    let residual = (phi0(0.5 * xi) * value - coeffs.b1(xi)).abs();
    if residual.is_nan() || residual > UPSILON_CONSISTENCY_TOLERANCE {
        return Err(Error::InconsistentCoefficients { xi, residual });
    }
    Ok(Upsilon { value, residual })
}
