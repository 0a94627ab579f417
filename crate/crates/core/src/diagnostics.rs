//! Conserved and modified functionals, Sobolev norms, non-resonance
//! indicators and drift statistics.
//!
//! End-weighted sums over `|j| <= M` are reduced to the stored range
//! `j = -M..M-1` using `q_M = q_{-M}`:
//!
//! * single prime (factor 1/2 at `±M`): the plain sum;
//! * double prime (factor 1/4 at `±M`): the sum over `|j| < M` plus half
//!   of the `j = -M` term. In the momentum the two end terms cancel.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{phi1, sigma_filter};
use crate::methods::ErknCoefficients;
use crate::spectral::{inverse_dft, SpectralState, WaveProblem};

/// Tolerance on the relative imaginary part of the momentum sum.
pub const MOMENTUM_IMAG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    pub momentum: f64,
    pub total_action: f64,
    pub actions: Vec<f64>,
    pub mod_energy: f64,
    pub mod_momentum: f64,
    pub mod_total_action: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub max_abs_deviation: f64,
    pub linear_slope: f64,
    pub reference_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedQuantities {
    pub energy: f64,
    pub momentum: f64,
    pub total_action: f64,
    pub actions: Vec<f64>,
}

/// Double-prime end weight of storage slot `i` (`1/2` at `j = -M`).
#[inline]
fn end_weight(i: usize, m: usize) -> f64 {
    if i == m {
        0.5
    } else {
        1.0
    }
}

/// `||c||_s = (sum'' omega_j^{2s} |c_j|^2)^{1/2}`.
pub fn sobolev_norm(coeffs: &[Complex64], s: f64, problem: &WaveProblem) -> f64 {
    let m = problem.m();
    coeffs
        .iter()
        .zip(problem.omega())
        .enumerate()
        .map(|(i, (c, w))| end_weight(i, m) * w.powf(2.0 * s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `(||q||_{s+1}^2 + ||p||_s^2)^{1/2}`, the size `epsilon` of the data.
pub fn initial_size(state: &SpectralState, s: f64, problem: &WaveProblem) -> f64 {
    (sobolev_norm(&state.q, s + 1.0, problem).powi(2) + sobolev_norm(&state.p, s, problem).powi(2)).sqrt()
}

/// `V(q) = 1/(2M) sum_k U(u_k)`.
pub fn potential(state: &SpectralState, problem: &WaveProblem) -> Result<f64> {
    let u = inverse_dft(&state.q, problem)?;
    let nl = problem.nonlinearity();
    Ok(u.iter().map(|&v| nl.potential(v)).sum::<f64>() / u.len() as f64)
}

fn weighted_energy(state: &SpectralState, problem: &WaveProblem, weight: impl Fn(usize) -> f64) -> Result<f64> {
    let quad: f64 = problem
        .omega()
        .iter()
        .enumerate()
        .map(|(i, w)| weight(i) * (state.p[i].norm_sqr() + w * w * state.q[i].norm_sqr()))
        .sum();
    Ok(0.5 * quad + potential(state, problem)?)
}

/// `H_M = 1/2 sum' (|p_j|^2 + omega_j^2 |q_j|^2) + V(q)`.
pub fn energy(state: &SpectralState, problem: &WaveProblem) -> Result<f64> {
    weighted_energy(state, problem, |_| 1.0)
}

fn weighted_momentum(state: &SpectralState, weight: impl Fn(usize) -> f64) -> Result<f64> {
    let n = state.len();
    let m = n / 2;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for i in (1..m).chain(m + 1..n) {
        let j = if i < m { i as f64 } else { i as f64 - n as f64 };
        let term = Complex64::new(0.0, -j) * state.q[n - i] * state.p[i] * weight(i);
        scale += term.norm();
        sum += term;
    }
    if sum.im.abs() > MOMENTUM_IMAG_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SymmetryViolation {
            residual: sum.im.abs() / scale,
            tolerance: MOMENTUM_IMAG_TOLERANCE,
        });
    }
    Ok(sum.re)
}

/// `K = -sum'' i j q_{-j} p_j`.
pub fn momentum(state: &SpectralState) -> Result<f64> {
    weighted_momentum(state, |_| 1.0)
}

/// `I_j = omega_j/2 |q_j|^2 + 1/(2 omega_j) |p_j|^2` per storage slot.
pub fn mode_actions(state: &SpectralState, problem: &WaveProblem) -> Vec<f64> {
    problem
        .omega()
        .iter()
        .enumerate()
        .map(|(i, w)| 0.5 * w * state.q[i].norm_sqr() + 0.5 / w * state.p[i].norm_sqr())
        .collect()
}

/// `J_0 = I_0`, `J_l = I_l + I_{-l}` for `0 < l < M`, `J_M = I_M`.
pub fn actions(state: &SpectralState, problem: &WaveProblem) -> Vec<f64> {
    fold_actions(&mode_actions(state, problem), problem.m())
}

fn fold_actions(per_slot: &[f64], m: usize) -> Vec<f64> {
    let n = 2 * m;
    (0..=m)
        .map(|l| match l {
            0 => per_slot[0],
            l if l == m => per_slot[m],
            l => per_slot[l] + per_slot[n - l],
        })
        .collect()
}

/// `sum'' I_j` from the folded actions: `J_0 + ... + J_{M-1} + J_M/2`.
pub fn total_action(folded: &[f64]) -> f64 {
    let last = folded.len() - 1;
    folded
        .iter()
        .enumerate()
        .map(|(l, v)| if l == last && last > 0 { 0.5 * v } else { *v })
        .sum()
}

/// `sigma(h omega_j)` per storage slot.
pub fn sigma_values(problem: &WaveProblem, coeffs: &ErknCoefficients, h: f64) -> Result<Vec<f64>> {
    problem
        .omega()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            sigma_filter(coeffs, h * w).map_err(|_| Error::SingularMode {
                mode: problem.mode(i),
                xi: h * w,
            })
        })
        .collect()
}

/// Modified energy, momentum and actions weighted by `sigma(h omega_j)`.
/// The potential term is not weighted.
pub fn modified_quantities(
    state: &SpectralState,
    problem: &WaveProblem,
    coeffs: &ErknCoefficients,
    h: f64,
) -> Result<ModifiedQuantities> {
    let sigma = sigma_values(problem, coeffs, h)?;
    modified_with_sigma(state, problem, &sigma)
}

pub fn modified_with_sigma(state: &SpectralState, problem: &WaveProblem, sigma: &[f64]) -> Result<ModifiedQuantities> {
    let per_slot: Vec<f64> = mode_actions(state, problem)
        .iter()
        .zip(sigma)
        .map(|(a, s)| a * s)
        .collect();
    let actions = fold_actions(&per_slot, problem.m());
    Ok(ModifiedQuantities {
        energy: weighted_energy(state, problem, |i| sigma[i])?,
        momentum: weighted_momentum(state, |i| sigma[i])?,
        total_action: total_action(&actions),
        actions,
    })
}

/// Evaluates full records along a trajectory of one method.
#[derive(Debug, Clone)]
pub struct Recorder {
    problem: WaveProblem,
    sigma: Option<Vec<f64>>,
}

impl Recorder {
    /// Modified columns become NaN when `sigma` is singular at some mode.
    pub fn new(problem: &WaveProblem, coeffs: &ErknCoefficients, h: f64) -> Self {
        Self {
            problem: problem.clone(),
            sigma: sigma_values(problem, coeffs, h).ok(),
        }
    }

    pub fn has_modified(&self) -> bool {
        self.sigma.is_some()
    }

    pub fn record(&self, t: f64, state: &SpectralState) -> Result<DiagnosticsRecord> {
        let actions = actions(state, &self.problem);
        let (mod_energy, mod_momentum, mod_total_action) = match &self.sigma {
            Some(sigma) => {
                let m = modified_with_sigma(state, &self.problem, sigma)?;
                (m.energy, m.momentum, m.total_action)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        Ok(DiagnosticsRecord {
            t,
            energy: energy(state, &self.problem)?,
            momentum: momentum(state)?,
            total_action: total_action(&actions),
            actions,
            mod_energy,
            mod_momentum,
            mod_total_action,
        })
    }
}

/// Max deviation from the first value and least-squares slope of the
/// deviation against `t`.
pub fn drift_summary<F>(records: &[DiagnosticsRecord], field: F) -> Result<DriftSummary>
where
    F: Fn(&DiagnosticsRecord) -> f64,
{
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.t, field(r))).collect();
    drift_of_series(&points)
}

pub fn drift_of_series(points: &[(f64, f64)]) -> Result<DriftSummary> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("drift needs at least two records".into()));
    }
    let reference_value = points[0].1;
    let n = points.len() as f64;
    let dev: Vec<(f64, f64)> = points.iter().map(|&(t, v)| (t, v - reference_value)).collect();
    let max_abs_deviation = dev.iter().map(|d| d.1.abs()).fold(0.0, f64::max);
    let t_mean = dev.iter().map(|d| d.0).sum::<f64>() / n;
    let d_mean = dev.iter().map(|d| d.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, d) in &dev {
        sxy += (t - t_mean) * (d - d_mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    let linear_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(DriftSummary {
        max_abs_deviation,
        linear_slope,
        reference_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResonanceCondition {
    /// `|sin(h/2 (w_j - k.w)) sin(h/2 (w_j + k.w))| >= eps^{1/2} h^2 (w_j + |k.w|)`
    NonResonance,
    /// `|sin(h w_j)| >= h eps^{1/2}`
    Numerical,
    /// same sine product against `h^2 |sinc(h w_j)|` for `k = ±<j1> ± <j2>`,
    /// `j = j1 + j2`; the constant is reported, not checked
    Pair,
}

impl ResonanceCondition {
    pub fn label(self) -> &'static str {
        match self {
            Self::NonResonance => "non_resonance",
            Self::Numerical => "numerical",
            Self::Pair => "pair",
        }
    }
}

/// Sparse multi-index `k`: `(l, k_l)` with `k_l != 0`, ascending `l`.
pub type MultiIndex = Vec<(usize, i64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceRow {
    pub j: usize,
    pub k: MultiIndex,
    pub lhs: f64,
    pub rhs: f64,
    pub condition: ResonanceCondition,
    /// `None` for [`ResonanceCondition::Pair`].
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub h: f64,
    pub epsilon: f64,
    pub truncation: usize,
    pub support: Vec<usize>,
    pub rows: Vec<ResonanceRow>,
    /// Size of the near-resonant set (failed non-resonance rows).
    pub near_resonant: usize,
    pub numerical_failures: usize,
    /// Infimum of `lhs / (h^2 |sinc(h w_j)|)` over pair rows, the largest
    /// constant for which the pair condition holds.
    pub pair_constant: f64,
}

pub fn format_multi_index(k: &[(usize, i64)]) -> String {
    if k.is_empty() {
        return "0".into();
    }
    k.iter()
        .map(|(l, v)| format!("{l}:{v:+}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn k_dot_omega(k: &[(usize, i64)], omega_of: &impl Fn(usize) -> f64) -> f64 {
    k.iter().map(|&(l, v)| v as f64 * omega_of(l)).sum()
}

fn enumerate_k(support: &[usize], budget: i64, prefix: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
    match support.split_first() {
        None => out.push(prefix.clone()),
        Some((&l, rest)) => {
            for v in -budget..=budget {
                if v != 0 {
                    prefix.push((l, v));
                }
                enumerate_k(rest, budget - v.abs(), prefix, out);
                if v != 0 {
                    prefix.pop();
                }
            }
        }
    }
}

/// Non-resonance indicators for step size `h` and truncation `N <= 3`.
///
/// Multi-indices `k` with `||k|| <= 2N` are drawn from the `2N` modes of
/// largest action in `state`. `epsilon` defaults to the data size
/// `(||q||_{s+1}^2 + ||p||_s^2)^{1/2}` with `s = 1`.
pub fn resonance_report(
    h: f64,
    problem: &WaveProblem,
    truncation: usize,
    state: &SpectralState,
    epsilon: Option<f64>,
) -> Result<ResonanceReport> {
    if !(1..=3).contains(&truncation) {
        return Err(Error::InvalidArgument(format!(
            "truncation N must be in 1..=3, got {truncation}"
        )));
    }
    let m = problem.m();
    let epsilon = epsilon.unwrap_or_else(|| initial_size(state, 1.0, problem));
    let root_eps = epsilon.sqrt();
    let rho = problem.rho();
    let omega_of = |l: usize| (rho + (l * l) as f64).sqrt();
    let sine_product = |j: usize, kw: f64| {
        let wj = omega_of(j);
        ((0.5 * h * (wj - kw)).sin() * (0.5 * h * (wj + kw)).sin()).abs()
    };

    let folded = actions(state, problem);
    let mut ranked: Vec<usize> = (0..=m).collect();
    ranked.sort_by(|&a, &b| folded[b].total_cmp(&folded[a]).then(a.cmp(&b)));
    let mut support: Vec<usize> = ranked.into_iter().take(2 * truncation).collect();
    support.sort_unstable();

    let mut ks = Vec::new();
    enumerate_k(&support, 2 * truncation as i64, &mut Vec::new(), &mut ks);

    let mut rows = Vec::new();
    for j in 0..=m {
        for k in &ks {
            if k.len() == 1 && k[0].0 == j && k[0].1.abs() == 1 {
                continue;
            }
            let kw = k_dot_omega(k, &omega_of);
            let lhs = sine_product(j, kw);
            let rhs = root_eps * h * h * (omega_of(j) + kw.abs());
            rows.push(ResonanceRow {
                j,
                k: k.clone(),
                lhs,
                rhs,
                condition: ResonanceCondition::NonResonance,
                pass: Some(lhs >= rhs),
            });
        }
    }
    for j in 0..=m {
        let lhs = (h * omega_of(j)).sin().abs();
        let rhs = h * root_eps;
        rows.push(ResonanceRow {
            j,
            k: Vec::new(),
            lhs,
            rhs,
            condition: ResonanceCondition::Numerical,
            pass: Some(lhs >= rhs),
        });
    }

    // k = s1 <j1> + s2 <j2> with j = j1 + j2; k and -k give the same product
    let mut pairs: BTreeSet<(usize, MultiIndex)> = BTreeSet::new();
    let mi = m as i64;
    for j1 in -mi..=mi {
        for j2 in -mi..=mi {
            let j = j1 + j2;
            if j.abs() > mi {
                continue;
            }
            for s1 in [-1i64, 1] {
                for s2 in [-1i64, 1] {
                    let mut k: BTreeMap<usize, i64> = BTreeMap::new();
                    *k.entry(j1.unsigned_abs() as usize).or_default() += s1;
                    *k.entry(j2.unsigned_abs() as usize).or_default() += s2;
                    let mut k: MultiIndex = k.into_iter().filter(|&(_, v)| v != 0).collect();
                    if k.first().is_some_and(|&(_, v)| v < 0) {
                        k.iter_mut().for_each(|e| e.1 = -e.1);
                    }
                    pairs.insert((j.unsigned_abs() as usize, k));
                }
            }
        }
    }
    let mut pair_constant = f64::INFINITY;
    for (j, k) in pairs {
        let kw = k_dot_omega(&k, &omega_of);
        let lhs = sine_product(j, kw);
        let rhs = h * h * phi1(h * omega_of(j)).abs();
        if rhs > 0.0 {
            pair_constant = pair_constant.min(lhs / rhs);
        }
        rows.push(ResonanceRow {
            j,
            k,
            lhs,
            rhs,
            condition: ResonanceCondition::Pair,
            pass: None,
        });
    }

    let count = |c: ResonanceCondition| {
        rows.iter()
            .filter(|r| r.condition == c && r.pass == Some(false))
            .count()
    };
    Ok(ResonanceReport {
        h,
        epsilon,
        truncation,
        support,
        near_resonant: count(ResonanceCondition::NonResonance),
        numerical_failures: count(ResonanceCondition::Numerical),
        pair_constant,
        rows,
    })
}
