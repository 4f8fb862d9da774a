//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//! runs = 20
//!
//! [[field]]
//! name = "drift"
//! spec = { kind = "constant", velocity = [1.0, 0.5] }
//!
//! [[field]]
//! name = "mixed"
//! preset = "mixed"
//! count = 100
//!
//! [[solver]]
//! name = "euler-10"
//! method = "euler"
//! steps = 10
//!
//! [[solver]]
//! method = "adaptive"
//! ```
//!
//! A field entry names exactly one of `spec`, `preset` or `weights`. Preset
//! entries expand into a corpus; run `r` of a cell uses member `r % count`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use flowprobe_core::corpus::Preset;
use flowprobe_core::{FieldSpec, Rk45Config, ScheduleParams};
use serde::{Deserialize, Serialize};

use crate::BenchError;

fn default_runs() -> usize {
    10
}
fn default_threshold() -> f64 {
    flowprobe_core::metrics::DEFAULT_SUCCESS_THRESHOLD
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("flowprobe-out")
}
fn default_repeats() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Each solve is repeated this many times and the median wall time kept.
    #[serde(default = "default_repeats")]
    pub timing_repeats: usize,
    #[serde(rename = "field")]
    pub fields: Vec<FieldEntry>,
    #[serde(rename = "solver")]
    pub solvers: Vec<SolverEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Seed for preset generation; defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum SolverMethod {
    Euler {
        steps: usize,
    },
    Ab2 {
        steps: usize,
    },
    Rk45 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        atol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rtol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_step: Option<f64>,
    },
    Adaptive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dt_probe: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_min: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_n: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub method: SolverMethod,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<f64>,
}

impl SolverMethod {
    pub fn schedule_params(&self) -> Option<ScheduleParams> {
        match *self {
            SolverMethod::Adaptive {
                epsilon,
                dt_probe,
                n_min,
                n_max,
                delta_n,
            } => {
                let d = ScheduleParams::default();
                Some(ScheduleParams {
                    epsilon: epsilon.unwrap_or(d.epsilon),
                    dt_probe: dt_probe.unwrap_or(d.dt_probe),
                    n_min: n_min.unwrap_or(d.n_min),
                    n_max: n_max.unwrap_or(d.n_max),
                    delta_n: delta_n.unwrap_or(d.delta_n),
                })
            }
            _ => None,
        }
    }

    pub fn rk45_config(&self) -> Option<Rk45Config> {
        match *self {
            SolverMethod::Rk45 {
                atol,
                rtol,
                initial_step,
            } => {
                let d = Rk45Config::default();
                Some(Rk45Config {
                    atol: atol.unwrap_or(d.atol),
                    rtol: rtol.unwrap_or(d.rtol),
                    initial_step: initial_step.unwrap_or(d.initial_step),
                    ..d
                })
            }
            _ => None,
        }
    }

    fn validate(&self) -> flowprobe_core::Result<()> {
        match self {
            SolverMethod::Euler { steps } if *steps == 0 => {
                Err(flowprobe_core::Error::InvalidParams("euler needs at least one step".into()))
            }
            SolverMethod::Ab2 { steps } if *steps < 2 => {
                Err(flowprobe_core::Error::InvalidParams("ab2 needs at least two steps".into()))
            }
            SolverMethod::Rk45 { .. } => self.rk45_config().unwrap().validate(),
            SolverMethod::Adaptive { .. } => self.schedule_params().unwrap().validate(),
            _ => Ok(()),
        }
    }
}

impl SolverEntry {
    /// Explicit name, or one derived from the method and its step count.
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.method {
            SolverMethod::Euler { steps } => format!("euler-{steps}"),
            SolverMethod::Ab2 { steps } => format!("ab2-{steps}"),
            SolverMethod::Rk45 { .. } => "rk45".into(),
            SolverMethod::Adaptive { .. } => "adaptive".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // weight paths are relative to the config file
        if let Some(dir) = path.parent() {
            for f in &mut cfg.fields {
                if let Some(w) = &mut f.weights {
                    if w.is_relative() {
                        *w = dir.join(&*w);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.fields.is_empty() {
            return fail("at least one [[field]] is required".into());
        }
        if self.solvers.is_empty() {
            return fail("at least one [[solver]] is required".into());
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.timing_repeats == 0 {
            return fail("timing_repeats must be at least 1".into());
        }
        if self.success_threshold.is_nan() || self.success_threshold <= 0.0 {
            return fail("success_threshold must be positive".into());
        }
        let mut names = BTreeSet::new();
        for f in &self.fields {
            if !names.insert(f.name.as_str()) {
                return fail(format!("duplicate field name '{}'", f.name));
            }
            let sources = [f.spec.is_some(), f.preset.is_some(), f.weights.is_some()];
            if sources.iter().filter(|s| **s).count() != 1 {
                return fail(format!(
                    "field '{}' must set exactly one of spec, preset, weights",
                    f.name
                ));
            }
            if f.preset.is_none() && (f.count.is_some() || f.seed.is_some()) {
                return fail(format!("field '{}': count and seed only apply to presets", f.name));
            }
            if f.count == Some(0) {
                return fail(format!("field '{}': count must be at least 1", f.name));
            }
            if let Some(spec) = &f.spec {
                if matches!(spec, FieldSpec::Learned { .. }) {
                    return fail(format!("field '{}': use `weights = ...` for learned fields", f.name));
                }
                spec.validate()
                    .map_err(|e| BenchError::Config(format!("field '{}': {e}", f.name)))?;
            }
        }
        let mut names = BTreeSet::new();
        for s in &self.solvers {
            let label = s.label();
            s.method
                .validate()
                .map_err(|e| BenchError::Config(format!("solver '{label}': {e}")))?;
            if !names.insert(label.clone()) {
                return fail(format!("duplicate solver name '{label}'"));
            }
        }
        if let Some(sw) = &self.sweep {
            if !sw.epsilons.is_empty() {
                check_epsilons(&sw.epsilons)?;
            }
            if !sw.horizons.is_empty() {
                check_horizons(&sw.horizons)?;
            }
        }
        Ok(())
    }

    /// Probe parameters of the first adaptive solver, or the defaults.
    pub fn adaptive_template(&self) -> ScheduleParams {
        self.solvers
            .iter()
            .find_map(|s| s.method.schedule_params())
            .unwrap_or_default()
    }
}

pub(crate) fn check_epsilons(eps: &[f64]) -> Result<(), BenchError> {
    if eps.len() < 2 || eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(BenchError::Config(
            "epsilon sweep needs at least two positive values".into(),
        ));
    }
    Ok(())
}

pub(crate) fn check_horizons(dts: &[f64]) -> Result<(), BenchError> {
    if dts.is_empty() || dts.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(BenchError::Config(
            "horizon sweep needs values strictly inside (0, 1)".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
seed = 1
runs = 2

[[field]]
name = "drift"
spec = { kind = "constant", velocity = [1.0, 0.0] }

[[solver]]
method = "euler"
steps = 5
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINI).unwrap();
        assert_eq!(cfg.timing_repeats, 3);
        assert_eq!(cfg.solvers[0].label(), "euler-5");
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_entries() {
        let bad = [
            MINI.replace("runs = 2", "runs = 0"),
            MINI.replace("steps = 5", "steps = 0"),
            MINI.replace("method = \"euler\"", "method = \"heun\""),
            MINI.replace("spec = ", "preset = \"mixed\"\nspec = "),
            MINI.replace("[1.0, 0.0]", "[]"),
            MINI.replace("seed = 1", "sede = 1"),
            format!("{MINI}\n[[solver]]\nmethod = \"euler\"\nsteps = 5\n"),
            format!("{MINI}\n[sweep]\nepsilons = [0.1]\n"),
            format!("{MINI}\n[sweep]\nhorizons = [1.0]\n"),
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_toml(&text), Err(BenchError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn adaptive_overrides_apply() {
        let text = MINI.replace(
            "method = \"euler\"\nsteps = 5",
            "method = \"adaptive\"\nepsilon = 0.002",
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let p = cfg.adaptive_template();
        assert_eq!(p.epsilon, 0.002);
        assert_eq!(p.n_max, 10);
    }
}
