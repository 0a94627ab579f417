use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{steps_to, ExperimentConfig};
use super::HarnessError;
use crate::diagnostics::{self, DriftSummary, Recorder, ResonanceReport};
use crate::integrators::{self, StepContext, Stepper};
use crate::methods::{self, ErknCoefficients, PropertyReport};
use crate::spectral::{Nonlinearity, SpectralState, WaveProblem};
use crate::Error;

pub const CSV_HEADER: &str = "t,H,K,I,H_err,K_err,I_err,mod_H,mod_K,mod_I,mod_H_err,mod_K_err,mod_I_err";

/// Comparison time of the convergence study.
pub const CONVERGENCE_TIME: f64 = 1.0;

/// Errors below this fraction of the reference size count as roundoff.
pub const EXACT_RELATIVE_ERROR: f64 = 1e-10;

/// Reference step of the convergence study is `min(h) / REFERENCE_REFINEMENT`.
const REFERENCE_REFINEMENT: f64 = 16.0;

const FUNCTIONALS: [&str; 6] = ["H", "K", "I", "mod_H", "mod_K", "mod_I"];

/// Shortest decimal string that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Sobolev size of the initial data; CSV errors are divided by its square.
    pub epsilon: f64,
    pub steps: usize,
    /// Method name to functional name to drift of the raw values.
    pub methods: BTreeMap<String, BTreeMap<String, DriftSummary>>,
}

fn problem_for(config: &ExperimentConfig, linear: bool) -> Result<WaveProblem, HarnessError> {
    let problem = config.problem()?;
    if linear {
        return Ok(problem.with_nonlinearity(Nonlinearity::zero())?);
    }
    Ok(problem)
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Long-time run of every configured method; writes `<method>.csv` per
/// method and `summary.json`.
pub fn cmd_run(config: &ExperimentConfig, linear: bool, out: &mut dyn Write) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let problem = problem_for(config, linear)?;
    let state0 = config.initial_state(&problem)?;
    let epsilon = diagnostics::initial_size(&state0, config.s, &problem);
    let steps = config.step_count()?;
    let methods = config.resolved_methods()?;
    ensure_dir(&config.output_dir)?;

    let results: Vec<_> = methods
        .par_iter()
        .map(|coeffs| run_method(config, &problem, &state0, coeffs, epsilon, steps))
        .collect();

    let mut summary = RunSummary {
        epsilon,
        steps,
        methods: BTreeMap::new(),
    };
    for (coeffs, result) in methods.iter().zip(results) {
        let drift = result?;
        let h = &drift["H"];
        writeln!(
            out,
            "{}: {steps} steps, max|H - H(0)| = {:e}, H slope = {:e}",
            coeffs.name(),
            h.max_abs_deviation,
            h.linear_slope
        )?;
        summary.methods.insert(coeffs.name().to_string(), drift);
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    fs::write(config.output_dir.join("summary.json"), json + "\n")?;
    writeln!(
        out,
        "wrote {} method files to {}",
        methods.len(),
        config.output_dir.display()
    )?;
    Ok(summary)
}

fn run_method(
    config: &ExperimentConfig,
    problem: &WaveProblem,
    state0: &SpectralState,
    coeffs: &ErknCoefficients,
    epsilon: f64,
    steps: usize,
) -> Result<BTreeMap<String, DriftSummary>, HarnessError> {
    let name = coeffs.name();
    let path = config.output_dir.join(format!("{name}.csv"));
    let mut csv = BufWriter::new(File::create(&path)?);
    writeln!(csv, "{CSV_HEADER}")?;

    let mut stepper = StepContext::new(problem, coeffs, config.h)?;
    let recorder = Recorder::new(problem, coeffs, config.h);
    let scale = if epsilon > 0.0 { epsilon * epsilon } else { 1.0 };
    let mut base: Option<[f64; 6]> = None;
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 6];
    let mut io_failure: Option<io::Error> = None;

    let outcome = integrators::integrate(state0, &mut stepper, steps, config.record_stride, |_, t, state| {
        let r = recorder.record(t, state)?;
        let values = [
            r.energy,
            r.momentum,
            r.total_action,
            r.mod_energy,
            r.mod_momentum,
            r.mod_total_action,
        ];
        let b = *base.get_or_insert(values);
        let err = |i: usize| (values[i] - b[i]) / scale;
        let mut line = format_value(t);
        for i in [0, 1, 2] {
            line.push(',');
            line.push_str(&format_value(values[i]));
        }
        for i in [0, 1, 2] {
            line.push(',');
            line.push_str(&format_value(err(i)));
        }
        for i in [3, 4, 5] {
            line.push(',');
            line.push_str(&format_value(values[i]));
        }
        for i in [3, 4, 5] {
            line.push(',');
            line.push_str(&format_value(err(i)));
        }
        if let Err(e) = writeln!(csv, "{line}") {
            io_failure = Some(e);
            return Err(Error::InvalidArgument("csv write failed".into()));
        }
        for (s, v) in series.iter_mut().zip(values) {
            s.push((t, v));
        }
        Ok(())
    });
    if let Some(e) = io_failure {
        return Err(HarnessError::Runtime(format!(
            "{name}: writing {}: {e}",
            path.display()
        )));
    }
    match outcome {
        Ok(_) => {}
        Err(Error::BlowUp { step }) => {
            csv.flush()?;
            return Err(HarnessError::Runtime(format!(
                "{name}: blow-up at step {step} (t = {})",
                step as f64 * config.h
            )));
        }
        Err(e) => return Err(HarnessError::Runtime(format!("{name}: {e}"))),
    }
    csv.flush()?;

    let mut drift = BTreeMap::new();
    for (label, points) in FUNCTIONALS.iter().zip(&series) {
        if label.starts_with("mod_") && !recorder.has_modified() {
            continue;
        }
        let summary = if points.len() < 2 {
            DriftSummary {
                max_abs_deviation: 0.0,
                linear_slope: 0.0,
                reference_value: points[0].1,
            }
        } else {
            diagnostics::drift_of_series(points)?
        };
        drift.insert(label.to_string(), summary);
    }
    Ok(drift)
}

/// Structural classification of one method, as text and `key=value` lines.
pub fn cmd_check(coeffs: &ErknCoefficients, out: &mut dyn Write) -> Result<PropertyReport, HarnessError> {
    let report = methods::classify(coeffs)?;
    let yes_no = |b: bool| if b { "yes" } else { "no" };
    writeln!(out, "method {}", report.name)?;
    writeln!(out, "  symmetric:  {}", yes_no(report.symmetric))?;
    match (report.symplectic, report.d1) {
        (true, Some(d1)) => writeln!(out, "  symplectic: yes (d1 = {d1})")?,
        _ => writeln!(out, "  symplectic: no")?,
    }
    let order = methods::classical_order(coeffs);
    writeln!(out, "  order:      {order}")?;
    for (k, v) in &report.max_residuals {
        writeln!(out, "  {k:<12} {v:.3e}")?;
    }
    writeln!(out, "method={}", report.name)?;
    writeln!(out, "symmetric={}", report.symmetric)?;
    writeln!(out, "symplectic={}", report.symplectic)?;
    match (report.symplectic, report.d1) {
        (true, Some(d1)) => writeln!(out, "d1={d1}")?,
        _ => writeln!(out, "d1=none")?,
    }
    writeln!(out, "order={order}")?;
    for (k, v) in &report.max_residuals {
        writeln!(out, "{k}={v:e}")?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOrder {
    pub method: String,
    /// `(h, error)` in decreasing `h`.
    pub errors: Vec<(f64, f64)>,
    /// Mean of `log2(e(h) / e(h/2))`; `None` when the errors are at roundoff.
    pub order: Option<f64>,
    pub exact: bool,
}

fn solve_to(
    problem: &WaveProblem,
    coeffs: &ErknCoefficients,
    state0: &SpectralState,
    h: f64,
    t: f64,
) -> Result<SpectralState, HarnessError> {
    let steps = steps_to(t, h)?;
    let mut stepper = StepContext::new(problem, coeffs, h)?;
    let mut state = state0.clone();
    for n in 1..=steps {
        state = stepper.step(&state)?;
        if !state.is_finite() {
            return Err(HarnessError::Runtime(format!("{}: blow-up at step {n}", coeffs.name())));
        }
    }
    Ok(state)
}

fn product_norm(q: &[num_complex::Complex64], p: &[num_complex::Complex64], s: f64, problem: &WaveProblem) -> f64 {
    let nq = diagnostics::sobolev_norm(q, s + 1.0, problem);
    let np = diagnostics::sobolev_norm(p, s, problem);
    (nq * nq + np * np).sqrt()
}

/// Self-convergence study at `t = 1` against a fine ERKN4 reference;
/// writes `converge.csv`.
pub fn cmd_converge(
    config: &ExperimentConfig,
    h_list: &[f64],
    linear: bool,
    out: &mut dyn Write,
) -> Result<Vec<MethodOrder>, HarnessError> {
    if h_list.len() < 3 {
        return Err(HarnessError::Usage(format!(
            "convergence needs at least 3 step sizes, got {}",
            h_list.len()
        )));
    }
    let mut hs = h_list.to_vec();
    hs.sort_by(|a, b| b.total_cmp(a));
    for w in hs.windows(2) {
        if w[1].is_nan() || w[1] <= 0.0 || ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(HarnessError::Usage(format!(
                "step sizes must halve successively, got {hs:?}"
            )));
        }
    }
    let problem = problem_for(config, linear)?;
    let state0 = config.initial_state(&problem)?;
    let methods = config.resolved_methods()?;
    let reference_method = methods::lookup("ERKN4").expect("builtin");
    let h_ref = hs[hs.len() - 1] / REFERENCE_REFINEMENT;
    let reference = solve_to(&problem, &reference_method, &state0, h_ref, CONVERGENCE_TIME)?;
    let size = product_norm(&reference.q, &reference.p, config.s, &problem);

    let results: Vec<Result<MethodOrder, HarnessError>> = methods
        .par_iter()
        .map(|coeffs| {
            let mut errors = Vec::with_capacity(hs.len());
            for &h in &hs {
                let end = solve_to(&problem, coeffs, &state0, h, CONVERGENCE_TIME)?;
                let dq: Vec<_> = end.q.iter().zip(&reference.q).map(|(a, b)| a - b).collect();
                let dp: Vec<_> = end.p.iter().zip(&reference.p).map(|(a, b)| a - b).collect();
                errors.push((h, product_norm(&dq, &dp, config.s, &problem)));
            }
            let exact = errors
                .iter()
                .all(|&(_, e)| e <= EXACT_RELATIVE_ERROR * size.max(f64::MIN_POSITIVE));
            let order = (!exact).then(|| {
                let pairs: Vec<f64> = errors.windows(2).map(|w| (w[0].1 / w[1].1).log2()).collect();
                pairs.iter().sum::<f64>() / pairs.len() as f64
            });
            Ok(MethodOrder {
                method: coeffs.name().to_string(),
                errors,
                order,
                exact,
            })
        })
        .collect();
    let orders: Vec<MethodOrder> = results.into_iter().collect::<Result<_, _>>()?;

    ensure_dir(&config.output_dir)?;
    let mut csv = BufWriter::new(File::create(config.output_dir.join("converge.csv"))?);
    writeln!(csv, "method,h,error,order")?;
    for mo in &orders {
        for (i, &(h, e)) in mo.errors.iter().enumerate() {
            let order = match mo.errors.get(i + 1) {
                Some(&(_, next)) if !mo.exact => format_value((e / next).log2()),
                _ => String::new(),
            };
            writeln!(csv, "{},{},{},{}", mo.method, format_value(h), format_value(e), order)?;
        }
        match mo.order {
            Some(p) => writeln!(out, "{}: observed order {p:.3}", mo.method)?,
            None => writeln!(out, "{}: exact (errors at roundoff level)", mo.method)?,
        }
    }
    csv.flush()?;
    Ok(orders)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionOutcome {
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares `n` ERKN steps with the conjugated trigonometric integrator.
pub fn cmd_compose_verify(
    config: &ExperimentConfig,
    coeffs: &ErknCoefficients,
    n: usize,
    out: &mut dyn Write,
) -> Result<CompositionOutcome, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Usage("n must be at least 1".into()));
    }
    let problem = config.problem()?;
    let state0 = config.initial_state(&problem)?;
    let ctx = StepContext::new(&problem, coeffs, config.h)?;
    let deviation = integrators::verify_composition(&state0, n, &ctx, config.s).map_err(|e| match e {
        Error::NotSymmetric(_) => HarnessError::Usage(format!(
            "{e}; compose-verify requires a method satisfying the symmetry conditions"
        )),
        other => other.into(),
    })?;
    let tolerance = 1e-10 * n as f64;
    let passed = deviation < tolerance;
    writeln!(
        out,
        "{}: n = {n}, deviation = {deviation:e}, tolerance = {tolerance:e}: {}",
        coeffs.name(),
        if passed { "pass" } else { "FAIL" }
    )?;
    Ok(CompositionOutcome {
        deviation,
        tolerance,
        passed,
    })
}

/// Non-resonance indicators for the configured initial data; writes
/// `resonance.csv`.
pub fn cmd_resonance(
    config: &ExperimentConfig,
    truncation: usize,
    out: &mut dyn Write,
) -> Result<ResonanceReport, HarnessError> {
    let problem = config.problem()?;
    let state0 = config.initial_state(&problem)?;
    let epsilon = diagnostics::initial_size(&state0, config.s, &problem);
    let report = diagnostics::resonance_report(config.h, &problem, truncation, &state0, Some(epsilon))?;
    ensure_dir(&config.output_dir)?;
    let mut csv = BufWriter::new(File::create(config.output_dir.join("resonance.csv"))?);
    writeln!(csv, "j,k_support,lhs,rhs,condition,pass")?;
    for row in &report.rows {
        let pass = row.pass.map(|b| b.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            row.j,
            diagnostics::format_multi_index(&row.k),
            format_value(row.lhs),
            format_value(row.rhs),
            row.condition.label(),
            pass
        )?;
    }
    csv.flush()?;
    writeln!(
        out,
        "h = {}, epsilon = {:e}, N = {truncation}, support = {:?}",
        report.h, report.epsilon, report.support
    )?;
    writeln!(
        out,
        "{} rows, {} near-resonant, {} numerical failures, pair constant {:e}",
        report.rows.len(),
        report.near_resonant,
        report.numerical_failures,
        report.pair_constant
    )?;
    Ok(report)
}
