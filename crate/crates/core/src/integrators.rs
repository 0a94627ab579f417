//! Time-stepping maps on [`SpectralState`].
//!
//! * [`erkn_step`]: one-stage explicit ERKN step, one nonlinearity
//!   evaluation.
//! * [`phi_l`] / [`phi_nl`]: the exact linear flow over an angle `theta`
//!   and the kick `p += h * Upsilon * g~(q)`.
//! * [`trig_step`] / [`TrigStepper`]: the trigonometric integrator
//!   `NL(h/2) ∘ L(h) ∘ NL(h/2)`.
//! * [`verify_composition`]: compares `n` ERKN steps with
//!   `L(h/2) ∘ NL(h/2) ∘ TI^(n-1) ∘ NL(h/2) ∘ L(h/2)`.
//!
//! Every kick uses `Upsilon(h * omega_j)`, including the half kicks.

use num_complex::Complex64;

use crate::diagnostics::sobolev_norm;
use crate::error::{Error, Result};
use crate::filters::{self, phi0, phi1};
use crate::methods::{check_symmetry, default_grid, ErknCoefficients, DEFAULT_GRID_POINTS};
use crate::spectral::{eval_nonlinearity, SpectralState, WaveProblem};

/// Per-mode filter cache for one `(h, M, rho, method)`.
#[derive(Debug, Clone)]
pub struct StepContext {
    h: f64,
    problem: WaveProblem,
    coeffs: ErknCoefficients,
    cos_h: Vec<f64>,
    sinc_h: Vec<f64>,
    cos_c: Vec<f64>,
    sinc_c: Vec<f64>,
    b1: Vec<f64>,
    bbar1: Vec<f64>,
}

impl StepContext {
    pub fn new(problem: &WaveProblem, coeffs: &ErknCoefficients, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        Ok(Self::build(problem, coeffs, h))
    }

    fn build(problem: &WaveProblem, coeffs: &ErknCoefficients, h: f64) -> Self {
        let c1 = coeffs.c1();
        let xi: Vec<f64> = problem.omega().iter().map(|w| (h * w).abs()).collect();
        let map = |f: &dyn Fn(f64) -> f64| xi.iter().map(|&x| f(x)).collect::<Vec<_>>();
        Self {
            h,
            problem: problem.clone(),
            coeffs: coeffs.clone(),
            cos_h: map(&phi0),
            sinc_h: map(&phi1),
            cos_c: map(&|x| phi0(c1 * x)),
            sinc_c: map(&|x| phi1(c1 * x)),
            b1: map(&|x| coeffs.b1(x)),
            bbar1: map(&|x| coeffs.bbar1(x)),
        }
    }

    /// Fresh context for the step `-h`; `self` is left untouched.
    pub fn reversed(&self) -> Self {
        Self::build(&self.problem, &self.coeffs, -self.h)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn problem(&self) -> &WaveProblem {
        &self.problem
    }

    pub fn coeffs(&self) -> &ErknCoefficients {
        &self.coeffs
    }

    #[cfg(test)]
    pub(crate) fn filter_tables(&self) -> [&[f64]; 6] {
        [
            &self.cos_h,
            &self.sinc_h,
            &self.cos_c,
            &self.sinc_c,
            &self.b1,
            &self.bbar1,
        ]
    }
}

fn check_len(state: &SpectralState, problem: &WaveProblem) -> Result<()> {
    if state.q.len() != problem.len() || state.p.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            actual: state.q.len().min(state.p.len()),
        });
    }
    Ok(())
}

/// One ERKN step.
pub fn erkn_step(state: &SpectralState, ctx: &StepContext) -> Result<SpectralState> {
    check_len(state, &ctx.problem)?;
    let h = ctx.h;
    let c1 = ctx.coeffs.c1();
    let omega = ctx.problem.omega();

    let stage: Vec<Complex64> = (0..state.len())
        .map(|i| ctx.cos_c[i] * state.q[i] + h * c1 * ctx.sinc_c[i] * state.p[i])
        .collect();
    let force = eval_nonlinearity(&stage, &ctx.problem)?;

    let mut next = SpectralState::zeros(state.len());
    #[allow(clippy::needless_range_loop)]
    for i in 0..state.len() {
        let (q, p) = (state.q[i], state.p[i]);
        next.q[i] = ctx.cos_h[i] * q + h * ctx.sinc_h[i] * p + h * h * ctx.bbar1[i] * force[i];
        next.p[i] = -h * omega[i] * omega[i] * ctx.sinc_h[i] * q + ctx.cos_h[i] * p + h * ctx.b1[i] * force[i];
    }
    next.enforce_symmetry()?;
    Ok(next)
}

/// ERKN step with `h` replaced by `sign * h`.
pub fn erkn_step_signed(state: &SpectralState, ctx: &StepContext, sign: i8) -> Result<SpectralState> {
    match sign {
        1 => erkn_step(state, ctx),
        -1 => erkn_step(state, &ctx.reversed()),
        _ => Err(Error::InvalidArgument(format!("sign must be ±1, got {sign}"))),
    }
}

/// Exact linear flow over `theta`:
/// `q <- cos(theta w) q + sin(theta w)/w p`, `p <- -w sin(theta w) q + cos(theta w) p`.
pub fn phi_l(state: &SpectralState, theta: f64, problem: &WaveProblem) -> SpectralState {
    let mut next = SpectralState::zeros(state.len());
    for (i, &w) in problem.omega().iter().enumerate() {
        let (s, c) = (theta * w).sin_cos();
        let (q, p) = (state.q[i], state.p[i]);
        next.q[i] = c * q + (s / w) * p;
        next.p[i] = -w * s * q + c * p;
    }
    next
}

/// Kick `p <- p + h * Upsilon * g~(q)`; `q` is returned unchanged.
pub fn phi_nl(state: &SpectralState, h: f64, upsilon: &[f64], problem: &WaveProblem) -> Result<SpectralState> {
    check_len(state, problem)?;
    if upsilon.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            actual: upsilon.len(),
        });
    }
    let force = eval_nonlinearity(&state.q, problem)?;
    Ok(kick(state, h, upsilon, &force))
}

fn kick(state: &SpectralState, h: f64, upsilon: &[f64], force: &[Complex64]) -> SpectralState {
    let p = state
        .p
        .iter()
        .zip(upsilon.iter().zip(force))
        .map(|(p, (u, f))| p + h * u * f)
        .collect();
    SpectralState { q: state.q.clone(), p }
}

/// Filters of the splitting maps and the trigonometric integrator.
#[derive(Debug, Clone)]
pub struct SplittingContext {
    h: f64,
    problem: WaveProblem,
    upsilon: Vec<f64>,
    cos_h: Vec<f64>,
    sinc_h: Vec<f64>,
}

impl SplittingContext {
    pub fn with_upsilon(problem: &WaveProblem, h: f64, upsilon: Vec<f64>) -> Result<Self> {
        if upsilon.len() != problem.len() {
            return Err(Error::LengthMismatch {
                expected: problem.len(),
                actual: upsilon.len(),
            });
        }
        let xi: Vec<f64> = problem.omega().iter().map(|w| h * w).collect();
        Ok(Self {
            h,
            problem: problem.clone(),
            upsilon,
            cos_h: xi.iter().map(|&x| phi0(x)).collect(),
            sinc_h: xi.iter().map(|&x| phi1(x)).collect(),
        })
    }

    /// `Upsilon(h omega_j)` derived from a symmetric ERKN method.
    pub fn for_method(problem: &WaveProblem, coeffs: &ErknCoefficients, h: f64) -> Result<Self> {
        let xi_max = h.abs() * problem.omega().iter().cloned().fold(0.0, f64::max);
        let grid = default_grid(xi_max.max(f64::MIN_POSITIVE), DEFAULT_GRID_POINTS);
        if !check_symmetry(coeffs, &grid)?.holds {
            return Err(Error::NotSymmetric(coeffs.name().to_string()));
        }
        let upsilon = problem
            .omega()
            .iter()
            .map(|w| filters::upsilon(coeffs, h * w).map(|u| u.value))
            .collect::<Result<Vec<_>>>()?;
        Self::with_upsilon(problem, h, upsilon)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn upsilon(&self) -> &[f64] {
        &self.upsilon
    }

    pub fn problem(&self) -> &WaveProblem {
        &self.problem
    }
}

fn trig_update(
    state: &SpectralState,
    ctx: &SplittingContext,
    force_now: &[Complex64],
) -> Result<(SpectralState, Vec<Complex64>)> {
    let h = ctx.h;
    let omega = ctx.problem.omega();
    let mut next = SpectralState::zeros(state.len());
    #[allow(clippy::needless_range_loop)]
    for i in 0..state.len() {
        let (q, p) = (state.q[i], state.p[i]);
        next.q[i] =
            ctx.cos_h[i] * q + h * ctx.sinc_h[i] * p + 0.5 * h * h * ctx.sinc_h[i] * ctx.upsilon[i] * force_now[i];
    }
    next.enforce_symmetry()?;
    let force_next = eval_nonlinearity(&next.q, &ctx.problem)?;
    for i in 0..state.len() {
        let (q, p) = (state.q[i], state.p[i]);
        let w = omega[i];
        next.p[i] = -w * (h * w).sin() * q
            + ctx.cos_h[i] * p
            + 0.5 * h * (ctx.cos_h[i] * ctx.upsilon[i] * force_now[i] + ctx.upsilon[i] * force_next[i]);
    }
    next.enforce_symmetry()?;
    Ok((next, force_next))
}

/// One step of the trigonometric integrator with two fresh nonlinearity
/// evaluations.
pub fn trig_step(state: &SpectralState, ctx: &SplittingContext) -> Result<SpectralState> {
    check_len(state, &ctx.problem)?;
    let force_now = eval_nonlinearity(&state.q, &ctx.problem)?;
    Ok(trig_update(state, ctx, &force_now)?.0)
}

/// Trigonometric integrator that reuses `g~(q_{n+1})` as the next step's
/// `g~(q_n)` when `reuse_force` is set.
#[derive(Debug, Clone)]
pub struct TrigStepper {
    ctx: SplittingContext,
    reuse_force: bool,
    cached: Option<(Vec<Complex64>, Vec<Complex64>)>,
}

impl TrigStepper {
    pub fn new(ctx: SplittingContext) -> Self {
        Self {
            ctx,
            reuse_force: true,
            cached: None,
        }
    }

    pub fn with_reuse(mut self, reuse: bool) -> Self {
        self.reuse_force = reuse;
        self
    }

    pub fn context(&self) -> &SplittingContext {
        &self.ctx
    }
}

/// A one-step map driven by [`integrate`].
pub trait Stepper {
    fn step(&mut self, state: &SpectralState) -> Result<SpectralState>;
    fn h(&self) -> f64;
}

impl Stepper for StepContext {
    fn step(&mut self, state: &SpectralState) -> Result<SpectralState> {
        erkn_step(state, self)
    }

    fn h(&self) -> f64 {
        self.h
    }
}

impl Stepper for TrigStepper {
    fn step(&mut self, state: &SpectralState) -> Result<SpectralState> {
        check_len(state, &self.ctx.problem)?;
        let force_now = match self.cached.take() {
            Some((q, f)) if self.reuse_force && q == state.q => f,
            _ => eval_nonlinearity(&state.q, &self.ctx.problem)?,
        };
        let (next, force_next) = trig_update(state, &self.ctx, &force_now)?;
        if self.reuse_force {
            self.cached = Some((next.q.clone(), force_next));
        }
        Ok(next)
    }

    fn h(&self) -> f64 {
        self.ctx.h
    }
}

/// Runs `n_steps` steps, calling `sink(step, t, state)` at step 0, every
/// `record_stride` steps, and at the final step.
pub fn integrate<S, F>(
    state0: &SpectralState,
    stepper: &mut S,
    n_steps: usize,
    record_stride: usize,
    mut sink: F,
) -> Result<SpectralState>
where
    S: Stepper + ?Sized,
    F: FnMut(usize, f64, &SpectralState) -> Result<()>,
{
    if record_stride == 0 {
        return Err(Error::InvalidArgument("record stride must be at least 1".into()));
    }
    let h = stepper.h();
    let mut state = state0.clone();
    sink(0, 0.0, &state)?;
    for n in 1..=n_steps {
        state = match stepper.step(&state) {
            Ok(s) if s.is_finite() => s,
            Ok(_) => return Err(Error::BlowUp { step: n }),
            Err(Error::SymmetryViolation { residual, .. }) if !residual.is_finite() => {
                return Err(Error::BlowUp { step: n })
            }
            Err(e) => return Err(e),
        };
        if n % record_stride == 0 || n == n_steps {
            sink(n, n as f64 * h, &state)?;
        }
    }
    Ok(state)
}

/// `max(||dq||_{s+1}, ||dp||_s)`.
pub fn state_distance(a: &SpectralState, b: &SpectralState, s: f64, problem: &WaveProblem) -> f64 {
    let dq: Vec<Complex64> = a.q.iter().zip(&b.q).map(|(x, y)| x - y).collect();
    let dp: Vec<Complex64> = a.p.iter().zip(&b.p).map(|(x, y)| x - y).collect();
    sobolev_norm(&dq, s + 1.0, problem).max(sobolev_norm(&dp, s, problem))
}

/// Largest deviation between `n` ERKN steps and the conjugated
/// trigonometric-integrator composition, measured with [`state_distance`].
pub fn verify_composition(state0: &SpectralState, n_steps: usize, ctx: &StepContext, s: f64) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("composition needs at least one step".into()));
    }
    let problem = &ctx.problem;
    let split = SplittingContext::for_method(problem, &ctx.coeffs, ctx.h)?;
    let half = 0.5 * ctx.h;

    let mut lhs = state0.clone();
    for _ in 0..n_steps {
        lhs = erkn_step(&lhs, ctx)?;
    }

    let mut rhs = phi_l(state0, half, problem);
    rhs = phi_nl(&rhs, half, &split.upsilon, problem)?;
    let mut ti = TrigStepper::new(split.clone());
    for _ in 1..n_steps {
        rhs = ti.step(&rhs)?;
    }
    rhs = phi_nl(&rhs, half, &split.upsilon, problem)?;
    rhs = phi_l(&rhs, half, problem);

    Ok(state_distance(&lhs, &rhs, s, problem))
}

/// Relative perturbation of the central-difference Jacobian stencils.
pub const PROBE_PERTURBATION: f64 = 1e-4;

/// `|det J - 1|` of the scalar one-step map for `q'' + omega^2 q = g(q)`
/// at `(q, p) = (amplitude, 0)`, by central differences.
pub fn jacobian_determinant_probe<G>(omega: f64, h: f64, coeffs: &ErknCoefficients, g: G, amplitude: f64) -> f64
where
    G: Fn(f64) -> f64,
{
    let step = |q: f64, p: f64| scalar_erkn_step(q, p, omega, h, coeffs, &g);
    let (q0, p0): (f64, f64) = (amplitude, 0.0);
    let delta = PROBE_PERTURBATION * q0.abs().max(p0.abs()).max(1.0);
    let (qa, pa) = step(q0 + delta, p0);
    let (qb, pb) = step(q0 - delta, p0);
    let (qc, pc) = step(q0, p0 + delta);
    let (qd, pd) = step(q0, p0 - delta);
    let j = [
        [(qa - qb) / (2.0 * delta), (qc - qd) / (2.0 * delta)],
        [(pa - pb) / (2.0 * delta), (pc - pd) / (2.0 * delta)],
    ];
    (j[0][0] * j[1][1] - j[0][1] * j[1][0] - 1.0).abs()
}

/// `max |J^T S J - S|` for the ERKN map of the coupled oscillators
/// `q'' + diag(omega)^2 q = force(q)` at `point = (q, p)`, with `S` the
/// canonical structure matrix. Unlike the one-degree-of-freedom
/// determinant, this detects frequency-dependent symplecticity constants.
pub fn symplecticity_defect_probe<F>(omega: &[f64], h: f64, coeffs: &ErknCoefficients, force: F, point: &[f64]) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let d = omega.len();
    assert_eq!(point.len(), 2 * d, "point must hold q and p");
    let c1 = coeffs.c1();
    let step = |x: &[f64]| -> Vec<f64> {
        let (q, p) = x.split_at(d);
        let stage: Vec<f64> = (0..d)
            .map(|i| {
                let xi = (h * omega[i]).abs();
                phi0(c1 * xi) * q[i] + h * c1 * phi1(c1 * xi) * p[i]
            })
            .collect();
        let f = force(&stage);
        let mut out = vec![0.0; 2 * d];
        for i in 0..d {
            let (w, xi) = (omega[i], (h * omega[i]).abs());
            out[i] = phi0(xi) * q[i] + h * phi1(xi) * p[i] + h * h * coeffs.bbar1(xi) * f[i];
            out[d + i] = -h * w * w * phi1(xi) * q[i] + phi0(xi) * p[i] + h * coeffs.b1(xi) * f[i];
        }
        out
    };
    let scale = point.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let delta = PROBE_PERTURBATION * scale;
    let n = 2 * d;
    // jac[r][c] = d out_r / d x_c
    let mut jac = vec![vec![0.0; n]; n];
    for c in 0..n {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[c] += delta;
        minus[c] -= delta;
        let (a, b) = (step(&plus), step(&minus));
        for r in 0..n {
            jac[r][c] = (a[r] - b[r]) / (2.0 * delta);
        }
    }
    let structure = |r: usize, c: usize| -> f64 {
        if r < d && c == r + d {
            1.0
        } else if r >= d && c + d == r {
            -1.0
        } else {
            0.0
        }
    };
    let mut defect = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let mut v = 0.0;
            for r in 0..n {
                for c in 0..n {
                    let s = structure(r, c);
                    if s != 0.0 {
                        v += jac[r][a] * s * jac[c][b];
                    }
                }
            }
            defect = defect.max((v - structure(a, b)).abs());
        }
    }
    defect
}

/// The ERKN map for a single oscillator.
pub fn scalar_erkn_step<G>(q: f64, p: f64, omega: f64, h: f64, coeffs: &ErknCoefficients, g: G) -> (f64, f64)
where
    G: Fn(f64) -> f64,
{
    let c1 = coeffs.c1();
    let xi = (h * omega).abs();
    let stage = phi0(c1 * xi) * q + h * c1 * phi1(c1 * xi) * p;
    let f = g(stage);
    (
        phi0(xi) * q + h * phi1(xi) * p + h * h * coeffs.bbar1(xi) * f,
        -h * omega * omega * phi1(xi) * q + phi0(xi) * p + h * coeffs.b1(xi) * f,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::{builtin, lookup};
    use crate::spectral::{experiment_u0, experiment_v0, sample_initial, Nonlinearity};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(m: usize, amp: f64, seed: u64) -> SpectralState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * m;
        let mut s = SpectralState::zeros(n);
        for c in [&mut s.q, &mut s.p] {
            c[0] = Complex64::new(amp * rng.random_range(-1.0..1.0), 0.0);
            c[m] = Complex64::new(amp * rng.random_range(-1.0..1.0), 0.0);
            for i in 1..m {
                c[i] = amp * Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                c[n - i] = c[i].conj();
            }
        }
        s
    }

    fn max_diff(a: &SpectralState, b: &SpectralState) -> f64 {
        a.q.iter()
            .zip(&b.q)
            .chain(a.p.iter().zip(&b.p))
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn exact_rotation(state: &SpectralState, t: f64, problem: &WaveProblem) -> SpectralState {
        let mut out = SpectralState::zeros(state.len());
        for (i, &w) in problem.omega().iter().enumerate() {
            out.q[i] = (w * t).cos() * state.q[i] + (w * t).sin() / w * state.p[i];
            out.p[i] = -w * (w * t).sin() * state.q[i] + (w * t).cos() * state.p[i];
        }
        out
    }

    /// Direct transcription of the ERKN scheme with an O(M^2) transform and
    /// no cached filters.
    fn straight_line_step(
        state: &SpectralState,
        m: usize,
        rho: f64,
        h: f64,
        coeffs: &ErknCoefficients,
    ) -> SpectralState {
        let n = 2 * m;
        let modes: Vec<i64> = (0..n as i64)
            .map(|i| if i < m as i64 { i } else { i - n as i64 })
            .collect();
        let xs: Vec<f64> = (0..n).map(|k| (k as f64 - m as f64) * PI / m as f64).collect();
        let c1 = coeffs.c1();
        let mut stage = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let w = (rho + (modes[i] * modes[i]) as f64).sqrt();
            let xi = h * w;
            let sc = if c1 * xi == 0.0 {
                1.0
            } else {
                (c1 * xi).sin() / (c1 * xi)
            };
            stage[i] = (c1 * xi).cos() * state.q[i] + h * c1 * sc * state.p[i];
        }
        let u: Vec<f64> = xs
            .iter()
            .map(|&x| {
                modes
                    .iter()
                    .zip(&stage)
                    .map(|(&j, c)| (c * Complex64::from_polar(1.0, j as f64 * x)).re)
                    .sum()
            })
            .collect();
        let gu: Vec<f64> = u.iter().map(|v| v * v).collect(); // -g(u) = u^2
        let force: Vec<Complex64> = modes
            .iter()
            .map(|&j| {
                xs.iter()
                    .zip(&gu)
                    .map(|(&x, &v)| v * Complex64::from_polar(1.0, -(j as f64) * x))
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect();
        let mut out = SpectralState::zeros(n);
        for i in 0..n {
            let w = (rho + (modes[i] * modes[i]) as f64).sqrt();
            let xi = h * w;
            out.q[i] = xi.cos() * state.q[i] + xi.sin() / w * state.p[i] + h * h * coeffs.bbar1(xi) * force[i];
            out.p[i] = -w * xi.sin() * state.q[i] + xi.cos() * state.p[i] + h * coeffs.b1(xi) * force[i];
        }
        out
    }

    fn standard_problem(nl: Nonlinearity) -> (WaveProblem, SpectralState) {
        let p = WaveProblem::new(0.5, 64, nl).unwrap();
        let s = sample_initial(experiment_u0, experiment_v0, &p).unwrap();
        (p, s)
    }

    #[test]
    fn caches_match_direct_filters() {
        let (p, _) = standard_problem(Nonlinearity::negative_square());
        for m in builtin() {
            let ctx = StepContext::new(&p, &m, 0.5).unwrap();
            let [ch, sh, cc, sc, b, bb] = ctx.filter_tables();
            for (i, &w) in p.omega().iter().enumerate() {
                let xi = 0.5 * w;
                assert!((ch[i] - xi.cos()).abs() <= 1e-15);
                assert!((sh[i] - xi.sin() / xi).abs() <= 1e-15);
                assert!((cc[i] - (m.c1() * xi).cos()).abs() <= 1e-15);
                assert!((sc[i] - phi1(m.c1() * xi)).abs() <= 1e-15);
                assert_eq!(b[i], m.b1(xi));
                assert_eq!(bb[i], m.bbar1(xi));
            }
        }
        assert!(StepContext::new(&p, &builtin()[0], 0.0).is_err());
        assert!(StepContext::new(&p, &builtin()[0], -0.1).is_err());
    }

    #[test]
    fn linear_step_is_exact_rotation() {
        let p = WaveProblem::new(0.5, 8, Nonlinearity::zero()).unwrap();
        let s = random_state(8, 1.0, 3);
        for m in builtin() {
            let ctx = StepContext::new(&p, &m, 0.3).unwrap();
            let out = erkn_step(&s, &ctx).unwrap();
            assert!(
                max_diff(&out, &exact_rotation(&s, 0.3, &p)) < 1e-14 * 10.0,
                "{}",
                m.name()
            );
            let back = erkn_step_signed(&out, &ctx, -1).unwrap();
            assert!(max_diff(&back, &s) < 1e-13);
            assert_eq!(erkn_step_signed(&s, &ctx, 1).unwrap(), out);
        }
    }

    #[test]
    fn zero_state_is_fixed() {
        let (p, _) = standard_problem(Nonlinearity::negative_square());
        let z = SpectralState::zeros(128);
        for m in builtin() {
            let ctx = StepContext::new(&p, &m, 0.5).unwrap();
            assert_eq!(erkn_step(&z, &ctx).unwrap(), z);
        }
    }

    #[test]
    fn matches_straight_line_transcription() {
        let p = WaveProblem::new(0.5, 2, Nonlinearity::negative_square()).unwrap();
        let s = random_state(2, 0.05, 5);
        for m in builtin() {
            let ctx = StepContext::new(&p, &m, 0.1).unwrap();
            let fast = erkn_step(&s, &ctx).unwrap();
            let slow = straight_line_step(&s, 2, 0.5, 0.1, &m);
            assert!(max_diff(&fast, &slow) < 1e-13, "{}", m.name());
        }
    }

    #[test]
    fn reversibility_separates_symmetric_methods() {
        let (p, s) = standard_problem(Nonlinearity::negative_square());
        let norm =
            |x: &SpectralState| (sobolev_norm(&x.q, 2.0, &p).powi(2) + sobolev_norm(&x.p, 1.0, &p).powi(2)).sqrt();
        for m in builtin() {
            let ctx = StepContext::new(&p, &m, 0.5).unwrap();
            let back = erkn_step_signed(&erkn_step(&s, &ctx).unwrap(), &ctx, -1).unwrap();
            let dev = state_distance(&back, &s, 1.0, &p);
            match m.name() {
                "ERKN3" | "ERKN4" => assert!(dev <= 1e-11 * (1.0 + norm(&s)), "{}: {dev:e}", m.name()),
                "ERKN2" => assert!(dev > 1e-6, "ERKN2: {dev:e}"),
                _ => {}
            }
        }
    }

    #[test]
    fn linear_flow_group_property() {
        let p = WaveProblem::new(0.5, 8, Nonlinearity::zero()).unwrap();
        let s = random_state(8, 1.0, 9);
        assert_eq!(phi_l(&s, 0.0, &p), s);
        assert!(max_diff(&phi_l(&phi_l(&s, 0.37, &p), -0.37, &p), &s) < 1e-14);
        let a = phi_l(&phi_l(&s, 0.2, &p), 0.55, &p);
        let b = phi_l(&s, 0.75, &p);
        assert!(max_diff(&a, &b) < 1e-13);
    }

    #[test]
    fn kick_cases() {
        let (p, _) = standard_problem(Nonlinearity::negative_square());
        let s = random_state(64, 0.01, 1);
        let ones = vec![1.0; 128];
        assert_eq!(phi_nl(&s, 0.0, &ones, &p).unwrap(), s);
        let lin = p.with_nonlinearity(Nonlinearity::zero()).unwrap();
        assert_eq!(phi_nl(&s, 0.4, &ones, &lin).unwrap(), s);

        // single mode q = a cos x: -g(u) = a^2 cos^2 x = a^2/2 + a^2/4 (e^{2ix} + e^{-2ix})
        let mut single = SpectralState::zeros(128);
        let a = 0.3;
        single.q[1] = Complex64::new(a / 2.0, 0.0);
        single.q[127] = Complex64::new(a / 2.0, 0.0);
        let h = 0.25;
        let out = phi_nl(&single, h, &ones, &p).unwrap();
        assert_eq!(out.q, single.q);
        for i in 0..128 {
            let expect = match p.mode(i) {
                0 => a * a / 2.0,
                2 | -2 => a * a / 4.0,
                _ => 0.0,
            };
            assert!((out.p[i] - Complex64::new(h * expect, 0.0)).norm() < 1e-16, "slot {i}");
        }
    }

    #[test]
    fn trig_step_is_strang_composition() {
        let (p, s) = standard_problem(Nonlinearity::negative_square());
        let e3 = lookup("ERKN3").unwrap();
        let ctx = SplittingContext::for_method(&p, &e3, 0.5).unwrap();
        let direct = trig_step(&s, &ctx).unwrap();
        let mut comp = phi_nl(&s, 0.25, ctx.upsilon(), &p).unwrap();
        comp = phi_l(&comp, 0.5, &p);
        comp = phi_nl(&comp, 0.25, ctx.upsilon(), &p).unwrap();
        assert!(max_diff(&direct, &comp) < 1e-14);

        let lin = p.with_nonlinearity(Nonlinearity::zero()).unwrap();
        let lctx = SplittingContext::for_method(&lin, &e3, 0.5).unwrap();
        let out = trig_step(&s, &lctx).unwrap();
        assert!(max_diff(&out, &exact_rotation(&s, 0.5, &lin)) < 1e-14);
    }

    #[test]
    fn force_reuse_is_bitwise_identical() {
        let (p, s) = standard_problem(Nonlinearity::negative_square());
        let ctx = SplittingContext::for_method(&p, &lookup("ERKN4").unwrap(), 0.5).unwrap();
        let mut fresh = TrigStepper::new(ctx.clone()).with_reuse(false);
        let mut reuse = TrigStepper::new(ctx.clone());
        let (mut a, mut b) = (s.clone(), s.clone());
        for _ in 0..50 {
            a = fresh.step(&a).unwrap();
            b = reuse.step(&b).unwrap();
            assert_eq!(a, b);
        }
        let mut c = s.clone();
        for _ in 0..50 {
            c = trig_step(&c, &ctx).unwrap();
        }
        assert_eq!(a, c);
    }

    #[test]
    fn splitting_refuses_non_symmetric_methods() {
        let (p, s) = standard_problem(Nonlinearity::negative_square());
        for name in ["ERKN1", "ERKN2"] {
            let m = lookup(name).unwrap();
            let ctx = StepContext::new(&p, &m, 0.5).unwrap();
            assert!(matches!(
                verify_composition(&s, 1, &ctx, 1.0),
                Err(Error::NotSymmetric(_))
            ));
        }
    }

    #[test]
    fn composition_identity() {
        let (p, s) = standard_problem(Nonlinearity::negative_square());
        for name in ["ERKN3", "ERKN4"] {
            let ctx = StepContext::new(&p, &lookup(name).unwrap(), 0.5).unwrap();
            let one = verify_composition(&s, 1, &ctx, 1.0).unwrap();
            assert!(one <= 1e-13, "{name} n=1: {one:e}");
            let many = verify_composition(&s, 100, &ctx, 1.0).unwrap();
            assert!(many <= 1e-10, "{name} n=100: {many:e}");
        }
        let lin = p.with_nonlinearity(Nonlinearity::zero()).unwrap();
        let ctx = StepContext::new(&lin, &lookup("ERKN3").unwrap(), 0.5).unwrap();
        assert!(verify_composition(&s, 37, &ctx, 1.0).unwrap() <= 1e-12);
    }

    #[test]
    fn integrate_records_and_linear_exactness() {
        let lin = WaveProblem::new(0.5, 16, Nonlinearity::zero()).unwrap();
        let s = random_state(16, 0.1, 4);
        let mut ctx = StepContext::new(&lin, &lookup("ERKN1").unwrap(), 0.1).unwrap();

        let mut times = Vec::new();
        let out = integrate(&s, &mut ctx, 0, 1, |_, t, _| {
            times.push(t);
            Ok(())
        })
        .unwrap();
        assert_eq!(out, s);
        assert_eq!(times, vec![0.0]);

        let mut steps = Vec::new();
        let out = integrate(&s, &mut ctx, 1000, 300, |n, _, _| {
            steps.push(n);
            Ok(())
        })
        .unwrap();
        assert_eq!(steps, vec![0, 300, 600, 900, 1000]);
        assert!(max_diff(&out, &exact_rotation(&s, 100.0, &lin)) < 1e-10);
    }

    #[test]
    fn blow_up_reports_step() {
        // g(u) = -u^5 with large data escapes quickly
        let nl = Nonlinearity::new("quintic", |u| -u.powi(5), |u| -u.powi(6) / 6.0);
        let p = WaveProblem::new(0.5, 4, nl).unwrap();
        let mut s = SpectralState::zeros(8);
        s.q[0] = Complex64::new(3.0, 0.0);
        let mut ctx = StepContext::new(&p, &lookup("ERKN4").unwrap(), 0.5).unwrap();
        match integrate(&s, &mut ctx, 10_000, 1, |_, _, _| Ok(())) {
            Err(Error::BlowUp { step }) => assert!((1..10_000).contains(&step)),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn determinant_probe() {
        let quad = |q: f64| -q * q;
        for m in builtin() {
            for w in [1.0, 2.0, 3.0, 5.0] {
                assert!(jacobian_determinant_probe(w, 0.5, &m, |_| 0.0, 0.1) <= 1e-12);
            }
        }
        for name in ["ERKN2", "ERKN4"] {
            let m = lookup(name).unwrap();
            assert!(jacobian_determinant_probe(3.0, 0.5, &m, quad, 0.1) <= 1e-8);
        }
        let e1 = lookup("ERKN1").unwrap();
        let worst = [1.0, 2.0, 3.0, 5.0]
            .iter()
            .map(|&w| jacobian_determinant_probe(w, 0.5, &e1, quad, 0.1))
            .fold(0.0, f64::max);
        assert!(worst > 1e-4, "{worst:e}");
    }

    #[test]
    fn one_degree_of_freedom_cannot_see_frequency_dependent_d1() {
        // ERKN3 fails the constant-d1 condition yet is area preserving for
        // a single oscillator
        let e3 = lookup("ERKN3").unwrap();
        for w in [1.0, 2.0, 3.0, 5.0] {
            assert!(jacobian_determinant_probe(w, 0.5, &e3, |q| -q * q, 0.1) <= 1e-8);
        }
    }

    #[test]
    fn coupled_probe_separates_symplectic_methods() {
        // U(q) = q0^2 q1, force = -grad U
        let force = |q: &[f64]| vec![-2.0 * q[0] * q[1], -q[0] * q[0]];
        let point = [0.1, -0.05, 0.02, 0.03];
        for m in builtin() {
            let linear = symplecticity_defect_probe(&[1.0, 3.0], 0.5, &m, |_| vec![0.0, 0.0], &point);
            assert!(linear <= 1e-12, "{}: {linear:e}", m.name());
            let defect = symplecticity_defect_probe(&[1.0, 3.0], 0.5, &m, force, &point);
            match m.name() {
                "ERKN2" | "ERKN4" => assert!(defect <= 1e-8, "{}: {defect:e}", m.name()),
                _ => assert!(defect > 1e-6, "{}: {defect:e}", m.name()),
            }
        }
    }
}
