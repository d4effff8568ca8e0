use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::network::{Activation, LayerSpec};
use crate::problems::{ObservationSampling, ProblemKind, ProblemSpec};
use crate::tables::{self, LV_STEP};
use crate::training::{Collocation, Mode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
    pub init_seed: u64,
}

impl NetworkConfig {
    /// Hidden layers followed by the linear output layer.
    pub fn layer_specs(&self, output_dim: usize) -> Vec<LayerSpec> {
        self.hidden
            .iter()
            .zip(&self.activations)
            .map(|(&w, &a)| LayerSpec::new(w, a))
            .chain(std::iter::once(LayerSpec::new(output_dim, Activation::Identity)))
            .collect()
    }
}

/// Everything that determines one experiment. Serialised field names are
/// the configuration file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub precision: Precision,
    /// Observation and evaluation grid, per-axis `(lo, hi, points)`, time first.
    pub grid: Vec<(f64, f64, usize)>,
    /// Evaluate on a grid other than `grid` (used by the CFL study).
    pub eval_grid: Option<Vec<(f64, f64, usize)>>,
    /// Keep this many evenly spread nodes per axis of the evaluation grid.
    pub eval_subgrid: Option<usize>,
    pub observations: usize,
    pub observation_seed: u64,
    pub observation_sampling: ObservationSampling,
    pub network: NetworkConfig,
    /// Initial values of the model parameters.
    pub param_init: Vec<f64>,
    pub series_max_mode: usize,
    pub rk4_step: f64,
    pub train: TrainConfig,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The published settings for one benchmark plus desk-scale training defaults.
    pub fn defaults(kind: ProblemKind) -> Self {
        let grid = tables::grid_row(kind);
        let arch = tables::architecture_row(kind);
        let spec = ProblemSpec::new(kind);
        ExperimentConfig {
            problem: kind,
            precision: Precision::F32,
            grid: grid.axes.to_vec(),
            eval_grid: None,
            eval_subgrid: match kind {
                ProblemKind::Heat2d | ProblemKind::Wave2d => Some(20),
                _ => None,
            },
            observations: grid.observations,
            observation_seed: 0,
            observation_sampling: ObservationSampling::default_for(kind),
            network: NetworkConfig {
                hidden: arch.hidden.to_vec(),
                activations: arch.activations.to_vec(),
                init_seed: 0,
            },
            param_init: vec![1.0; spec.param_names.len()],
            series_max_mode: 19,
            rk4_step: LV_STEP,
            train: TrainConfig::for_problem(kind),
            output_dir: None,
        }
    }

    /// Sets every seed (observations, initialisation, sampling) at once.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.observation_seed = seed;
        self.network.init_seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec::new(self.problem)
    }

    /// Parses a configuration. Fields that are absent take the defaults of the
    /// named problem. A run summary (which embeds its configuration under
    /// `"config"`) is accepted too.
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(inner) = value.get_mut("config").filter(|v| v.is_object()) {
            value = inner.take();
        }
        let problem = value
            .get("problem")
            .ok_or_else(|| HarnessError::Config("configuration needs a \"problem\" field".into()))?;
        let kind: ProblemKind =
            serde_json::from_value(problem.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut merged = serde_json::to_value(ExperimentConfig::defaults(kind)).expect("defaults serialise");
        overlay(&mut merged, value);
        let cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let spec = self.spec();
        let err = |m: String| Err(HarnessError::Config(m));
        let check_axes = |name: &str, axes: &[(f64, f64, usize)]| -> Result<(), HarnessError> {
            if axes.len() != spec.input_dim {
                return err(format!("{name} has {} axes, {} needs {}", axes.len(), spec.kind, spec.input_dim));
            }
            if axes.iter().any(|&(lo, hi, n)| n == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo) {
                return err(format!("{name} axes must be finite, ordered and non-empty"));
            }
            Ok(())
        };
        check_axes("grid", &self.grid)?;
        if let Some(g) = &self.eval_grid {
            check_axes("eval_grid", g)?;
        }
        if self.eval_subgrid == Some(0) {
            return err("eval_subgrid must be at least 1".into());
        }
        if self.network.hidden.len() != self.network.activations.len() {
            return err(format!(
                "{} hidden layers but {} activations",
                self.network.hidden.len(),
                self.network.activations.len()
            ));
        }
        if self.network.hidden.contains(&0) {
            return err("hidden layer widths must be positive".into());
        }
        if self.param_init.len() != spec.param_names.len() {
            return err(format!(
                "{} needs {} initial parameter values, got {}",
                spec.kind,
                spec.param_names.len(),
                self.param_init.len()
            ));
        }
        if self.param_init.iter().any(|v| !v.is_finite()) {
            return err("initial parameter values must be finite".into());
        }
        if self.series_max_mode == 0 || self.series_max_mode.is_multiple_of(2) {
            return err(format!("series_max_mode must be a positive odd number, got {}", self.series_max_mode));
        }
        if !(self.rk4_step > 0.0 && self.rk4_step.is_finite()) {
            return err("rk4_step must be positive".into());
        }
        if self.train.mode == Mode::Inverse && self.observations == 0 {
            return err("inverse mode needs at least one observation".into());
        }
        if let Collocation::Grid { axes } = &self.train.collocation {
            check_axes("collocation grid", axes)?;
        }
        self.train.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Recursively replaces fields of `base` with those present in `patch`.
fn overlay(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => overlay(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_tables() {
        let c = ExperimentConfig::defaults(ProblemKind::Wave2d);
        assert_eq!(c.observations, 61);
        assert_eq!(c.network.hidden, vec![128, 256, 128]);
        assert_eq!(c.train.lr, 1e-3);
        assert_eq!(ExperimentConfig::defaults(ProblemKind::Heat2d).train.lr, 1e-5);
        assert_eq!(c.param_init, vec![1.0]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_config_takes_problem_defaults() {
        let c = ExperimentConfig::from_json_str(r#"{"problem": "lotka_volterra", "train": {"epochs": 7}}"#).unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.lr, 1e-4);
        assert_eq!(c.observations, 40);
        assert_eq!(c.param_init.len(), 4);
    }

    #[test]
    fn full_config_round_trips() {
        for k in ProblemKind::ALL {
            let c = ExperimentConfig::defaults(k).with_seed(42);
            assert_eq!(ExperimentConfig::from_json_str(&c.to_json()).unwrap(), c);
        }
    }

    #[test]
    fn summary_document_is_accepted() {
        let c = ExperimentConfig::defaults(ProblemKind::Heat2d);
        let summary = serde_json::json!({ "max_abs_error": 0.1, "config": c });
        assert_eq!(ExperimentConfig::from_json_str(&summary.to_string()).unwrap(), c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in [
            r#"{"train": {"epochs": 1}}"#,
            r#"{"problem": "burgers"}"#,
            r#"{"problem": "heat2d", "param_init": [1.0, 2.0]}"#,
            r#"{"problem": "heat2d", "grid": [[0, 1, 10]]}"#,
            r#"{"problem": "heat2d", "train": {"lr": -1}}"#,
            r#"{"problem": "heat2d", "typo_field": 1}"#,
            r#"{"problem": "wave2d", "network": {"activations": ["tanh"]}}"#,
            "not json",
        ] {
            assert!(matches!(ExperimentConfig::from_json_str(text), Err(HarnessError::Config(_))), "{text}");
        }
    }
}
