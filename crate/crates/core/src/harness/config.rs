use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::methods::{self, ErknCoefficients};
use crate::spectral::{self, Nonlinearity, SpectralState, WaveProblem};

/// Largest allowed `|T - n h|` relative to `max(1, T)`.
const STEP_COUNT_TOLERANCE: f64 = 1e-9;

/// Horizon of the default experiment; `--full` multiplies it by ten.
pub const DEFAULT_HORIZON: f64 = 1e4;
pub const FULL_HORIZON: f64 = 1e5;

pub const INITIAL_NAMES: [&str; 3] = ["polynomial", "cosine", "zero"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rho: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub h: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub record_stride: usize,
    pub methods: Vec<String>,
    pub s: f64,
    pub g_name: String,
    pub initial_name: String,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// The long-time conservation experiment at `T = 1e4`.
    fn default() -> Self {
        Self {
            rho: 0.5,
            m: 64,
            h: 0.5,
            t_end: DEFAULT_HORIZON,
            record_stride: 1,
            methods: methods::builtin_names().into_iter().map(String::from).collect(),
            s: 1.0,
            g_name: "neg_square".into(),
            initial_name: "polynomial".into(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("h must be positive, got {}", self.h));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("T must be non-negative, got {}", self.t_end));
        }
        self.step_count()?;
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if !self.s.is_finite() {
            return bad("s must be finite".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        for name in &self.methods {
            resolve_method(name)?;
        }
        if Nonlinearity::by_name(&self.g_name).is_none() {
            return bad(format!("unknown g_name '{}' (zero, neg_square, cubic)", self.g_name));
        }
        if !INITIAL_NAMES.contains(&self.initial_name.as_str()) {
            return bad(format!(
                "unknown initial_name '{}' ({})",
                self.initial_name,
                INITIAL_NAMES.join(", ")
            ));
        }
        Ok(())
    }

    /// Number of steps `n = T / h`; rejects horizons that are not an
    /// integer number of steps.
    pub fn step_count(&self) -> Result<usize, HarnessError> {
        steps_to(self.t_end, self.h)
    }

    pub fn problem(&self) -> Result<WaveProblem, HarnessError> {
        let nl = Nonlinearity::by_name(&self.g_name)
            .ok_or_else(|| HarnessError::Config(format!("unknown g_name '{}'", self.g_name)))?;
        WaveProblem::new(self.rho, self.m, nl).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn initial_state(&self, problem: &WaveProblem) -> Result<SpectralState, HarnessError> {
        let state = match self.initial_name.as_str() {
            "polynomial" => spectral::sample_initial(spectral::experiment_u0, spectral::experiment_v0, problem),
            "cosine" => spectral::sample_initial(|x| 0.1 * x.cos(), |x| 0.05 * (2.0 * x).sin(), problem),
            "zero" => Ok(SpectralState::zeros(problem.len())),
            other => return Err(HarnessError::Config(format!("unknown initial_name '{other}'"))),
        };
        state.map_err(HarnessError::from)
    }

    pub fn resolved_methods(&self) -> Result<Vec<ErknCoefficients>, HarnessError> {
        self.methods.iter().map(|n| resolve_method(n)).collect()
    }
}

pub(crate) fn steps_to(t: f64, h: f64) -> Result<usize, HarnessError> {
    let n = (t / h).round();
    if !n.is_finite() || n < 0.0 || (n * h - t).abs() > STEP_COUNT_TOLERANCE * t.max(1.0) {
        return Err(HarnessError::Config(format!(
            "horizon {t} is not an integer multiple of h = {h}"
        )));
    }
    Ok(n as usize)
}

pub fn resolve_method(name: &str) -> Result<ErknCoefficients, HarnessError> {
    methods::lookup(name).ok_or_else(|| {
        HarnessError::Usage(format!(
            "unknown method '{name}'; available methods: {}",
            methods::builtin_names().join(", ")
        ))
    })
}

/// Reads a custom method from a JSON coefficient file.
pub fn load_coefficients(path: &Path) -> Result<ErknCoefficients, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    let spec: methods::CoefficientSpec =
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
    spec.build().map_err(|e| HarnessError::Config(e.to_string()))
}
