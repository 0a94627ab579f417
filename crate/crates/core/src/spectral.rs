//! Pseudospectral discretisation on the periodic interval [-pi, pi).
//!
//! Coefficient vectors have length `2M` and hold the modes `j = -M..M-1`
//! in FFT wraparound order: slot `i` stores mode `i` for `i < M` and mode
//! `i - 2M` otherwise, so slot `M` is the shared `j = ±M` mode. Sample
//! vectors are ordered by ascending collocation point `x_k = k*pi/M`,
//! `k = -M..M-1`.
//!
//! The transform pair uses the normalisation
//!
//! ```text
//! q_j = 1/(2M) * sum_k w_k exp(-i j x_k),     w_k = sum_j q_j exp(i j x_k)
//! ```
//!
//! With `q_M := q_{-M}` the end-weighted sum over `|j| <= M` (factor 1/2 on
//! `j = ±M`) coincides with the plain sum over `j = -M..M-1`, which is what
//! the inverse transform evaluates. No dealiasing is applied to products.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative Hermitian residual above which a coefficient vector is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A nonlinearity `g` together with its potential `U` (`U' = g`, `U(0) = 0`).
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    g: ScalarFn,
    potential: ScalarFn,
}

impl Nonlinearity {
    pub fn new<G, U>(name: impl Into<String>, g: G, potential: U) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        U: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            g: Arc::new(g),
            potential: Arc::new(potential),
        }
    }

    /// `g ≡ 0`, the linear Klein–Gordon equation.
    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |_| 0.0)
    }

    /// `g(u) = -u^2`, `U(u) = -u^3/3`.
    pub fn negative_square() -> Self {
        Self::new("neg_square", |u| -u * u, |u| -u * u * u / 3.0)
    }

    /// `g(u) = u^3`, `U(u) = u^4/4`.
    pub fn cubic() -> Self {
        Self::new("cubic", |u| u * u * u, |u| 0.25 * u * u * u * u)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "zero" => Some(Self::zero()),
            "neg_square" => Some(Self::negative_square()),
            "cubic" => Some(Self::cubic()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        (self.g)(u)
    }

    #[inline]
    pub fn potential(&self, u: f64) -> f64 {
        (self.potential)(u)
    }
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity").field("name", &self.name).finish()
    }
}

/// The semi-discrete problem `q'' + Omega^2 q = g~(q)` with `2M` modes.
#[derive(Clone)]
pub struct WaveProblem {
    rho: f64,
    m: usize,
    nonlinearity: Nonlinearity,
    omega: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for WaveProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WaveProblem")
            .field("rho", &self.rho)
            .field("m", &self.m)
            .field("nonlinearity", &self.nonlinearity)
            .finish()
    }
}

impl WaveProblem {
    pub fn new(rho: f64, m: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidProblem(format!("rho must be positive, got {rho}")));
        }
        if m == 0 {
            return Err(Error::InvalidProblem("M must be at least 1".into()));
        }
        let g0 = nonlinearity.g(0.0);
        if g0.abs() > 1e-14 {
            return Err(Error::InvalidProblem(format!(
                "nonlinearity `{}` has g(0) = {g0}",
                nonlinearity.name()
            )));
        }
        let delta = 1e-4;
        let u_slope = (nonlinearity.potential(delta) - nonlinearity.potential(-delta)) / (2.0 * delta);
        if u_slope.abs() > 1e-6 {
            return Err(Error::InvalidProblem(format!(
                "potential of `{}` is not consistent with g(0) = 0 (slope {u_slope:e})",
                nonlinearity.name()
            )));
        }
        if nonlinearity.potential(0.0).abs() > 1e-14 {
            return Err(Error::InvalidProblem("potential must satisfy U(0) = 0".into()));
        }

        let n = 2 * m;
        let omega = (0..n)
            .map(|i| {
                let j = mode_of(i, m) as f64;
                (rho + j * j).sqrt()
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Self {
            rho,
            m,
            nonlinearity,
            omega,
            forward,
            inverse,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of collocation points / stored modes, `2M`.
    pub fn len(&self) -> usize {
        2 * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    /// Same grid and frequencies with a different nonlinearity.
    pub fn with_nonlinearity(&self, nonlinearity: Nonlinearity) -> Result<Self> {
        Self::new(self.rho, self.m, nonlinearity)
    }

    /// `omega_j = sqrt(rho + j^2)` in storage order.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Logical mode index of storage slot `i`.
    pub fn mode(&self, slot: usize) -> i64 {
        mode_of(slot, self.m)
    }

    /// Storage slot of logical mode `j`, `-M <= j <= M` (`±M` share a slot).
    pub fn slot(&self, j: i64) -> usize {
        slot_of(j, self.m)
    }
}

/// Logical mode of storage slot `i` for `2M` points.
pub fn mode_of(i: usize, m: usize) -> i64 {
    if i < m {
        i as i64
    } else {
        i as i64 - 2 * m as i64
    }
}

/// Storage slot of mode `j`; `j = M` aliases to `j = -M`.
pub fn slot_of(j: i64, m: usize) -> usize {
    let n = 2 * m as i64;
    j.rem_euclid(n) as usize
}

/// Fourier coefficients of position and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub q: Vec<Complex64>,
    pub p: Vec<Complex64>,
}

impl SpectralState {
    pub fn zeros(len: usize) -> Self {
        Self {
            q: vec![Complex64::new(0.0, 0.0); len],
            p: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    fn half(&self) -> usize {
        self.q.len() / 2
    }

    pub fn q_mode(&self, j: i64) -> Complex64 {
        self.q[slot_of(j, self.half())]
    }

    pub fn p_mode(&self, j: i64) -> Complex64 {
        self.p[slot_of(j, self.half())]
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(&self.p)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn symmetry_residual(&self) -> f64 {
        symmetry_residual(&self.q).max(symmetry_residual(&self.p))
    }

    /// Re-symmetrises both components, failing if either is too far off.
    pub fn enforce_symmetry(&mut self) -> Result<()> {
        check_and_symmetrize(&mut self.q)?;
        check_and_symmetrize(&mut self.p)
    }
}

/// Relative Hermitian residual of a wraparound-ordered coefficient vector.
pub fn symmetry_residual(c: &[Complex64]) -> f64 {
    let n = c.len();
    if n == 0 {
        return 0.0;
    }
    let m = n / 2;
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut res = c[0].im.abs().max(c[m].im.abs());
    for i in 1..m {
        res = res.max((c[i] - c[n - i].conj()).norm());
    }
    res / scale
}

/// Replaces each pair `(c_j, c_{-j})` by its Hermitian average and zeroes
/// the imaginary parts of the self-conjugate modes `0` and `-M`.
pub fn symmetrize(c: &mut [Complex64]) {
    let n = c.len();
    if n == 0 {
        return;
    }
    let m = n / 2;
    c[0].im = 0.0;
    c[m].im = 0.0;
    for i in 1..m {
        let avg = 0.5 * (c[i] + c[n - i].conj());
        c[i] = avg;
        c[n - i] = avg.conj();
    }
}

fn check_and_symmetrize(c: &mut [Complex64]) -> Result<()> {
    let residual = symmetry_residual(c);
    if residual.is_nan() || residual > SYMMETRY_TOLERANCE {
        return Err(Error::SymmetryViolation {
            residual,
            tolerance: SYMMETRY_TOLERANCE,
        });
    }
    symmetrize(c);
    Ok(())
}

/// `x_k = k*pi/M` for `k = -M..M-1`, ascending.
pub fn collocation_grid(problem: &WaveProblem) -> Vec<f64> {
    let m = problem.m() as i64;
    (-m..m).map(|k| k as f64 * PI / m as f64).collect()
}

/// `omega_j = sqrt(rho + j^2)`, storage order.
pub fn frequencies(problem: &WaveProblem) -> Vec<f64> {
    problem.omega().to_vec()
}

/// `(F w)_j = 1/(2M) sum_k w_k exp(-i j x_k)`, returned in storage order and
/// re-symmetrised.
pub fn forward_dft(samples: &[f64], problem: &WaveProblem) -> Result<Vec<Complex64>> {
    let n = problem.len();
    if samples.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: samples.len(),
        });
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    problem.forward.process(&mut buf);
    // Samples start at x = -pi, which contributes exp(i*pi*j) = (-1)^j.
    let scale = 1.0 / n as f64;
    for (i, z) in buf.iter_mut().enumerate() {
        let sign = if i % 2 == 0 { scale } else { -scale };
        *z *= sign;
    }
    check_and_symmetrize(&mut buf)?;
    Ok(buf)
}

/// `w_k = sum_{j=-M}^{M-1} q_j exp(i j x_k)`; rejects non-Hermitian input.
pub fn inverse_dft(coeffs: &[Complex64], problem: &WaveProblem) -> Result<Vec<f64>> {
    let n = problem.len();
    if coeffs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: coeffs.len(),
        });
    }
    let mut buf = coeffs.to_vec();
    check_and_symmetrize(&mut buf)?;
    for (i, z) in buf.iter_mut().enumerate() {
        if i % 2 == 1 {
            *z = -*z;
        }
    }
    problem.inverse.process(&mut buf);
    Ok(buf.into_iter().map(|z| z.re).collect())
}

/// `g~(q) = -F g(F^{-1} q)`.
pub fn eval_nonlinearity(q: &[Complex64], problem: &WaveProblem) -> Result<Vec<Complex64>> {
    let mut u = inverse_dft(q, problem)?;
    let nl = problem.nonlinearity();
    for v in u.iter_mut() {
        *v = -nl.g(*v);
    }
    forward_dft(&u, problem)
}

/// Samples `u0` and `v0` at the collocation points and transforms them.
pub fn sample_initial<U, V>(u0: U, v0: V, problem: &WaveProblem) -> Result<SpectralState>
where
    U: Fn(f64) -> f64,
    V: Fn(f64) -> f64,
{
    let x = collocation_grid(problem);
    let us: Vec<f64> = x.iter().map(|&x| u0(x)).collect();
    let vs: Vec<f64> = x.iter().map(|&x| v0(x)).collect();
    Ok(SpectralState {
        q: forward_dft(&us, problem)?,
        p: forward_dft(&vs, problem)?,
    })
}

/// Initial position of the long-time experiment,
/// `0.1 (x/pi - 1)^3 (x/pi + 1)^2`.
pub fn experiment_u0(x: f64) -> f64 {
    let y = x / PI;
    0.1 * (y - 1.0).powi(3) * (y + 1.0).powi(2)
}

/// Initial velocity of the long-time experiment,
/// `0.01 (x/pi) (x/pi - 1) (x/pi + 1)^2`.
pub fn experiment_v0(x: f64) -> f64 {
    let y = x / PI;
    0.01 * y * (y - 1.0) * (y + 1.0).powi(2)
}
