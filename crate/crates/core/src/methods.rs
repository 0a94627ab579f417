//! Method registry and grid-sampled structural checks.
//!
//! A one-stage explicit ERKN method is fixed by the node `c1` and two scalar
//! filters `b1(xi)`, `bbar1(xi)` of `xi = h*omega`:
//!
//! ```text
//! Q     = cos(c1 xi) q + h c1 sinc(c1 xi) p
//! q_new = cos(xi) q + h sinc(xi) p + h^2 bbar1(xi) g~(Q)
//! p_new = -omega sin(xi) q + cos(xi) p + h b1(xi) g~(Q)
//! ```
//!
//! Symmetry holds iff `c1 = 1/2` and, with `V = xi^2`,
//!
//! ```text
//! bbar1 = phi1 b1 - phi0 bbar1,     phi0(c1^2 V) bbar1 = c1 phi1(c1^2 V) b1.
//! ```
//!
//! Symplecticity follows when a single constant `d1` satisfies
//!
//! ```text
//! phi0 b1 + V phi1 bbar1 = d1 phi0(c1^2 V),
//! phi1 b1 - phi0 bbar1   = c1 d1 phi1(c1^2 V).
//! ```
//!
//! The second set is only sufficient, so a `false` symplecticity verdict means
//! the condition fails on the grid, not that the map is proven non-symplectic.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{phi0, phi1};

pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
pub const SYMPLECTICITY_TOLERANCE: f64 = 1e-10;
/// Minimum grid size for a structural verdict.
pub const MIN_GRID_POINTS: usize = 16;
pub const DEFAULT_GRID_POINTS: usize = 1024;
pub const DEFAULT_XI_MAX: f64 = 4.0;

/// Elementary factor of a product filter, evaluated at `arg * xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Atom {
    Cos,
    Sin,
    Sinc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub atom: Atom,
    pub arg: f64,
}

/// `scale * prod_k atom_k(arg_k * xi)`; covers all built-in methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductFilter {
    pub scale: f64,
    #[serde(default)]
    pub factors: Vec<Factor>,
}

impl ProductFilter {
    pub fn eval(&self, xi: f64) -> f64 {
        self.factors.iter().fold(self.scale, |acc, f| {
            let x = f.arg * xi;
            acc * match f.atom {
                Atom::Cos => phi0(x),
                Atom::Sin => x.sin(),
                Atom::Sinc => phi1(x),
            }
        })
    }
}

#[derive(Clone)]
pub enum Filter {
    Product(ProductFilter),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Filter {
    #[inline]
    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            Filter::Product(p) => p.eval(xi),
            Filter::Function(f) => f(xi),
        }
    }
}

impl fmt::Debug for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::Product(p) => p.fmt(f),
            Filter::Function(_) => f.write_str("Function(..)"),
        }
    }
}

fn product(scale: f64, factors: &[(Atom, f64)]) -> Filter {
    Filter::Product(ProductFilter {
        scale,
        factors: factors.iter().map(|&(atom, arg)| Factor { atom, arg }).collect(),
    })
}

/// Node and weight filters of a one-stage explicit ERKN method.
#[derive(Debug, Clone)]
pub struct ErknCoefficients {
    name: String,
    c1: f64,
    b1: Filter,
    bbar1: Filter,
}

impl ErknCoefficients {
    pub fn new(name: impl Into<String>, c1: f64, b1: Filter, bbar1: Filter) -> Result<Self> {
        if !(0.0..=1.0).contains(&c1) {
            return Err(Error::InvalidArgument(format!("c1 must lie in [0, 1], got {c1}")));
        }
        let coeffs = Self {
            name: name.into(),
            c1,
            b1,
            bbar1,
        };
        if !coeffs.b1(0.0).is_finite() || !coeffs.bbar1(0.0).is_finite() {
            return Err(Error::InvalidArgument(format!(
                "filters of `{}` are not finite at xi = 0",
                coeffs.name
            )));
        }
        Ok(coeffs)
    }

    /// Coefficients from closures. Panics if `c1` is outside `[0, 1]`.
    pub fn custom<B, BB>(name: impl Into<String>, c1: f64, b1: B, bbar1: BB) -> Self
    where
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        BB: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            name,
            c1,
            Filter::Function(Arc::new(b1)),
            Filter::Function(Arc::new(bbar1)),
        )
        .expect("invalid custom coefficients")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// `b1` at `|xi|`.
    #[inline]
    pub fn b1(&self, xi: f64) -> f64 {
        self.b1.eval(xi.abs())
    }

    /// `bbar1` at `|xi|`.
    #[inline]
    pub fn bbar1(&self, xi: f64) -> f64 {
        self.bbar1.eval(xi.abs())
    }

    /// Largest `|b1|`, `|bbar1|` over `xi` in `[0, xi_max]`, sampled.
    pub fn sampled_bound(&self, xi_max: f64, points: usize) -> f64 {
        (0..=points)
            .map(|k| xi_max * k as f64 / points.max(1) as f64)
            .map(|xi| self.b1(xi).abs().max(self.bbar1(xi).abs()))
            .fold(0.0, f64::max)
    }
}

/// On-disk form of custom coefficients for `erkn check --coeffs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub name: String,
    pub c1: f64,
    pub b1: ProductFilter,
    pub bbar1: ProductFilter,
}

impl CoefficientSpec {
    pub fn build(self) -> Result<ErknCoefficients> {
        ErknCoefficients::new(
            self.name,
            self.c1,
            Filter::Product(self.b1),
            Filter::Product(self.bbar1),
        )
    }
}

/// The four reference methods `ERKN1..ERKN4`.
pub fn builtin() -> [ErknCoefficients; 4] {
    use Atom::{Cos, Sinc};
    let build = |name: &str, c1: f64, b1: Filter, bbar1: Filter| ErknCoefficients {
        name: name.into(),
        c1,
        b1,
        bbar1,
    };
    [
        build(
            "ERKN1",
            0.5,
            product(1.0, &[(Cos, 0.5)]),
            product(0.5, &[(Sinc, 0.5), (Sinc, 0.5)]),
        ),
        build("ERKN2", 0.2, product(1.0, &[(Cos, 0.8)]), product(0.8, &[(Sinc, 0.8)])),
        build(
            "ERKN3",
            0.5,
            product(1.0, &[(Sinc, 0.5), (Cos, 0.5)]),
            product(0.5, &[(Sinc, 0.5), (Sinc, 0.5)]),
        ),
        build("ERKN4", 0.5, product(1.0, &[(Cos, 0.5)]), product(0.5, &[(Sinc, 0.5)])),
    ]
}

pub fn builtin_methods() -> Vec<ErknCoefficients> {
    builtin().into()
}

pub fn builtin_names() -> Vec<&'static str> {
    vec!["ERKN1", "ERKN2", "ERKN3", "ERKN4"]
}

/// Looks a built-in method up by name (case-insensitive).
pub fn lookup(name: &str) -> Option<ErknCoefficients> {
    builtin().into_iter().find(|m| m.name.eq_ignore_ascii_case(name))
}

/// `points` equispaced values in `(0, xi_max]`.
pub fn default_grid(xi_max: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| xi_max * k as f64 / points as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryVerdict {
    pub holds: bool,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticityVerdict {
    pub holds: bool,
    pub d1: Option<f64>,
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub symmetric: bool,
    pub symplectic: bool,
    /// Present whenever the symplecticity constant could be estimated; it
    /// is meaningful only when `symplectic` is true.
    pub d1: Option<f64>,
    pub max_residuals: BTreeMap<String, f64>,
}

fn require_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < MIN_GRID_POINTS {
        return Err(Error::InsufficientGrid {
            points: grid.len(),
            required: MIN_GRID_POINTS,
        });
    }
    Ok(())
}

pub fn check_symmetry(coeffs: &ErknCoefficients, xi_grid: &[f64]) -> Result<SymmetryVerdict> {
    require_grid(xi_grid)?;
    let c1 = coeffs.c1;
    let mut weight = 0.0f64;
    let mut node = 0.0f64;
    for &xi in xi_grid {
        let (b, bb) = (coeffs.b1(xi), coeffs.bbar1(xi));
        weight = weight.max((bb - (phi1(xi) * b - phi0(xi) * bb)).abs());
        node = node.max((phi0(c1 * xi) * bb - c1 * phi1(c1 * xi) * b).abs());
    }
    let mut residuals = BTreeMap::new();
    residuals.insert("sym_c1".to_string(), (c1 - 0.5).abs());
    residuals.insert("sym_weights".to_string(), weight);
    residuals.insert("sym_node".to_string(), node);
    let holds = c1 == 0.5 && weight <= SYMMETRY_TOLERANCE && node <= SYMMETRY_TOLERANCE;
    Ok(SymmetryVerdict { holds, residuals })
}

pub fn check_symplecticity(coeffs: &ErknCoefficients, xi_grid: &[f64]) -> Result<SymplecticityVerdict> {
    require_grid(xi_grid)?;
    let c1 = coeffs.c1;
    let first_lhs = |xi: f64| phi0(xi) * coeffs.b1(xi) + xi * xi * phi1(xi) * coeffs.bbar1(xi);

    let mut sorted: Vec<f64> = xi_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let anchor = sorted
        .iter()
        .copied()
        .find(|&xi| phi0(c1 * xi).abs() >= 0.5)
        .ok_or(Error::Indeterminate)?;
    let d1 = first_lhs(anchor) / phi0(c1 * anchor);

    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for &xi in xi_grid {
        first = first.max((first_lhs(xi) - d1 * phi0(c1 * xi)).abs());
        let lhs = phi1(xi) * coeffs.b1(xi) - phi0(xi) * coeffs.bbar1(xi);
        second = second.max((lhs - c1 * d1 * phi1(c1 * xi)).abs());
    }
    let mut residuals = BTreeMap::new();
    residuals.insert("symp_first".to_string(), first);
    residuals.insert("symp_second".to_string(), second);
    Ok(SymplecticityVerdict {
        holds: first <= SYMPLECTICITY_TOLERANCE && second <= SYMPLECTICITY_TOLERANCE,
        d1: Some(d1),
        residuals,
    })
}

/// Both checks on the default grid `(0, 4]`, 1024 points.
pub fn classify(coeffs: &ErknCoefficients) -> Result<PropertyReport> {
    classify_on(coeffs, &default_grid(DEFAULT_XI_MAX, DEFAULT_GRID_POINTS))
}

pub fn classify_on(coeffs: &ErknCoefficients, xi_grid: &[f64]) -> Result<PropertyReport> {
    let sym = check_symmetry(coeffs, xi_grid)?;
    let symp = check_symplecticity(coeffs, xi_grid)?;
    let mut max_residuals = sym.residuals;
    max_residuals.extend(symp.residuals);
    Ok(PropertyReport {
        name: coeffs.name.clone(),
        symmetric: sym.holds,
        symplectic: symp.holds,
        d1: symp.d1,
        max_residuals,
    })
}

/// Tolerance on the classical order conditions at `xi = 0`.
pub const ORDER_TOLERANCE: f64 = 1e-12;

/// Residuals of the one-stage order conditions in the limit `xi -> 0`:
/// `b1(0) = 1` for order one, plus `bbar1(0) = 1/2` and `c1 b1(0) = 1/2`
/// for order two.
pub fn order_residuals(coeffs: &ErknCoefficients) -> [f64; 3] {
    let b = coeffs.b1(0.0);
    [
        (b - 1.0).abs(),
        (coeffs.bbar1(0.0) - 0.5).abs(),
        (coeffs.c1 * b - 0.5).abs(),
    ]
}

/// Classical order (0, 1 or 2) implied by [`order_residuals`].
pub fn classical_order(coeffs: &ErknCoefficients) -> u8 {
    let [first, second_a, second_b] = order_residuals(coeffs);
    if first > ORDER_TOLERANCE {
        0
    } else if second_a > ORDER_TOLERANCE || second_b > ORDER_TOLERANCE {
        1
    } else {
        2
    }
}
