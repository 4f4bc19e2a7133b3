//! Experiment configuration.
//!
//! Values are layered: built-in defaults, then an optional TOML file, then
//! `key=value` overrides addressed by dotted path (`controller.temperature`,
//! `truth.tilt_bias`, ...). Every default is a named key, so the effective
//! configuration can always be written back out as a complete file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{default_iterations, default_rollouts, PiConfig};
use crate::dynamics::{GroundTruth, HybridModel, QuadParams, SanityBox};
use crate::error::{Error, Result};
use crate::lwpr::LwprConfig;
use crate::simworld::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Analytic,
    Learned,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Analytic => "analytic",
            ModelKind::Learned => "learned",
        }
    }
}

/// One row of a sweep. Rollout and iteration counts fall back to the
/// per-setting defaults when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setting {
    pub model: ModelKind,
    #[serde(default = "one")]
    pub sub_rollouts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollouts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

fn one() -> usize {
    1
}

impl Setting {
    pub fn analytic() -> Self {
        Self { model: ModelKind::Analytic, sub_rollouts: 1, rollouts: None, iterations: None }
    }

    pub fn learned(sub_rollouts: usize) -> Self {
        Self { model: ModelKind::Learned, sub_rollouts, rollouts: None, iterations: None }
    }

    /// `analytic`, or `learned_m<M>` for learned settings.
    pub fn label(&self) -> String {
        match self.model {
            ModelKind::Analytic => "analytic".to_string(),
            ModelKind::Learned => format!("learned_m{}", self.sub_rollouts),
        }
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts.unwrap_or_else(|| default_rollouts(self.sub_rollouts))
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or_else(|| default_iterations(self.model == ModelKind::Learned, self.sub_rollouts))
    }

    /// Parses `analytic` or `learned:<M>`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "analytic" {
            return Ok(Self::analytic());
        }
        if let Some(m) = text.strip_prefix("learned:") {
            let m: usize =
                m.parse().map_err(|_| Error::Config(format!("bad sub-rollout count in setting `{text}`")))?;
            return Ok(Self::learned(m));
        }
        Err(Error::Config(format!("unknown setting `{text}` (expected `analytic` or `learned:<M>`)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    /// Linear drag coefficient, 1/s.
    pub drag: f64,
    pub thrust_scale: f64,
    /// Constant offset of the thrust axis (roll, pitch), rad.
    pub tilt_bias: [f64; 2],
}

impl Default for TruthConfig {
    fn default() -> Self {
        Self { drag: 0.35, thrust_scale: 0.95, tilt_bias: [0.03, -0.02] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub horizon_steps: usize,
    pub temperature: f64,
    /// Roll, pitch and yaw rate (rad/s) and thrust (N).
    pub exploration_std: [f64; 4],
    pub cost_ceiling: f64,
    pub sanity: SanityBox,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let pi = PiConfig::default();
        Self {
            horizon_steps: pi.horizon_steps,
            temperature: pi.temperature,
            exploration_std: pi.exploration_std,
            cost_ceiling: pi.cost_ceiling,
            sanity: pi.sanity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LwprSettings {
    pub w_gen: f64,
    pub participation: f64,
    pub forgetting: f64,
    pub ridge: f64,
    /// Kernel widths for roll, pitch, yaw (rad) and thrust (N).
    pub widths: [f64; 4],
}

impl Default for LwprSettings {
    fn default() -> Self {
        let c = HybridModel::default_config();
        let widths = [0, 1, 2, 3].map(|i| 1.0 / c.init_metric[i * 4 + i].sqrt());
        Self { w_gen: c.w_gen, participation: c.participation, forgetting: c.forgetting, ridge: c.ridge, widths }
    }
}

impl LwprSettings {
    pub fn to_config(&self) -> LwprConfig {
        LwprConfig {
            w_gen: self.w_gen,
            participation: self.participation,
            forgetting: self.forgetting,
            ridge: self.ridge,
            ..LwprConfig::with_widths(&self.widths)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Flight logs to train on, in order. When empty, `collect_trials`
    /// analytic-model flights are flown on the ground-truth simulator first.
    pub logs: Vec<PathBuf>,
    pub collect_trials: usize,
    pub collect_seed: u64,
    pub collect_rollouts: usize,
    /// Where the three per-axis models are written; relative paths are
    /// resolved against the output directory.
    pub model_dir: PathBuf,
    /// Held-out flights for the propagation-error comparison.
    pub holdout_trials: usize,
    pub holdout_seed: u64,
    /// Steps between the starts of consecutive held-out segments.
    pub segment_stride: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            logs: Vec::new(),
            collect_trials: 3,
            collect_seed: 1000,
            collect_rollouts: 1000,
            model_dir: PathBuf::from("model"),
            holdout_trials: 2,
            holdout_seed: 2000,
            segment_stride: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub settings: Vec<Setting>,
    pub trials: usize,
    /// Cycle cap per trial; reaching it is a timeout.
    pub max_steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut settings = vec![Setting::analytic()];
        settings.extend([1, 4, 8, 16, 32].map(Setting::learned));
        Self { settings, trials: 5, max_steps: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed optimizer calls per case; the median is reported.
    pub repeats: usize,
    pub iterations: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { repeats: 5, iterations: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Grid points per side of the obstacle-cost contour.
    pub grid: usize,
    pub settings: Vec<Setting>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self { grid: 81, settings: vec![Setting::analytic(), Setting::learned(1), Setting::learned(32)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; trial `j` of every setting uses `seed + j`.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub quad: QuadParams,
    pub truth: TruthConfig,
    pub controller: ControllerConfig,
    pub lwpr: LwprSettings,
    pub task: Task,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
    pub plot: PlotConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            workers: 0,
            quad: QuadParams::default(),
            truth: TruthConfig::default(),
            controller: ControllerConfig::default(),
            lwpr: LwprSettings::default(),
            task: Task::default(),
            training: TrainingConfig::default(),
            sweep: SweepConfig::default(),
            bench: BenchConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Defaults, overlaid with `file` when given, then with each
    /// `key=value` override in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut root =
            toml::Value::try_from(Self::default()).map_err(|e| Error::Config(format!("serializing defaults: {e}")))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let layer: toml::Table =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut root, toml::Value::Table(layer), "")?;
        }
        for item in overrides {
            apply_override(&mut root, item)?;
        }
        let config: Self = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.quad.validate()?;
        self.task.validate()?;
        self.lwpr.to_config().validate(4).map_err(|e| Error::Config(format!("lwpr: {e}")))?;
        let t = &self.truth;
        if !(t.drag >= 0.0 && t.thrust_scale > 0.0 && t.tilt_bias.iter().all(|v| v.is_finite())) {
            return Err(Error::Config(format!("invalid truth perturbation: {t:?}")));
        }
        for s in &self.sweep.settings {
            self.pi_config(s, 0)?.validate()?;
        }
        if self.sweep.trials == 0 || self.sweep.max_steps == 0 {
            return Err(Error::Config("sweep.trials and sweep.max_steps must be positive".into()));
        }
        if self.bench.repeats == 0 || self.bench.iterations == 0 {
            return Err(Error::Config("bench.repeats and bench.iterations must be positive".into()));
        }
        if self.training.segment_stride == 0 {
            return Err(Error::Config("training.segment_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn pi_config(&self, setting: &Setting, seed: u64) -> Result<PiConfig> {
        if setting.model == ModelKind::Analytic && setting.sub_rollouts != 1 {
            return Err(Error::Config("the analytic model is deterministic; use sub_rollouts = 1".into()));
        }
        let c = &self.controller;
        let config = PiConfig {
            num_rollouts: setting.rollouts(),
            sub_rollouts: setting.sub_rollouts,
            horizon_steps: c.horizon_steps,
            iterations_per_step: setting.iterations(),
            temperature: c.temperature,
            exploration_std: c.exploration_std,
            rng_seed: seed,
            cost_ceiling: c.cost_ceiling,
            sanity: c.sanity,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            params: self.quad,
            drag: self.truth.drag,
            thrust_scale: self.truth.thrust_scale,
            tilt_bias: self.truth.tilt_bias,
        }
    }

    pub fn horizon_seconds(&self) -> f64 {
        self.controller.horizon_steps as f64 * self.quad.dt
    }

    pub fn model_dir(&self) -> PathBuf {
        if self.training.model_dir.is_absolute() {
            self.training.model_dir.clone()
        } else {
            self.out_dir.join(&self.training.model_dir)
        }
    }
}

/// Overlays `layer` onto `base`. Keys must already exist in `base`, which
/// always holds the full default tree, so typos are reported instead of
/// silently ignored.
fn merge(base: &mut toml::Value, layer: toml::Value, path: &str) -> Result<()> {
    match (base, layer) {
        (toml::Value::Table(b), toml::Value::Table(l)) => {
            for (k, v) in l {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &sub)?,
                    None if optional_key(&k) => {
                        b.insert(k, v);
                    }
                    None => return Err(Error::Config(format!("unknown key `{sub}`"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Keys that are absent from the serialized defaults because they are unset.
fn optional_key(key: &str) -> bool {
    matches!(key, "rollouts" | "iterations")
}

fn apply_override(root: &mut toml::Value, item: &str) -> Result<()> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let mut layer = value;
    for part in key.split('.').rev() {
        if part.is_empty() {
            return Err(Error::Config(format!("bad key `{key}`")));
        }
        let mut t = toml::Table::new();
        t.insert(part.to_string(), layer);
        layer = toml::Value::Table(t);
    }
    merge(root, layer, "")
}

/// A TOML literal when `raw` parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_by_dotted_path() {
        let c = ExperimentConfig::load(
            None,
            &[
                "controller.temperature=0.5".into(),
                "truth.tilt_bias=[0.0, 0.1]".into(),
                "out_dir=/tmp/x".into(),
                "sweep.settings=[{model=\"analytic\"},{model=\"learned\",sub_rollouts=4,rollouts=10}]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.controller.temperature, 0.5);
        assert_eq!(c.truth.tilt_bias, [0.0, 0.1]);
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.sweep.settings.len(), 2);
        assert_eq!(c.sweep.settings[1].rollouts(), 10);
        assert_eq!(c.sweep.settings[1].iterations(), 2);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::load(None, &["controller.temprature=1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["controller.temperature=-1".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["no_equals".into()]).is_err());
    }

    #[test]
    fn file_layer_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "seed = 7\n[sweep]\ntrials = 2\n").unwrap();
        let c = ExperimentConfig::load(Some(&path), &["seed=9".into()]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.sweep.trials, 2);
        assert_eq!(c.sweep.max_steps, SweepConfig::default().max_steps);
    }

    #[test]
    fn table_defaults_per_setting() {
        assert_eq!(Setting::analytic().iterations(), 2);
        assert_eq!(Setting::learned(4).iterations(), 2);
        assert_eq!(Setting::learned(8).iterations(), 1);
        assert_eq!(Setting::learned(16).rollouts(), 970);
        assert_eq!(Setting::learned(32).rollouts(), 950);
        assert_eq!(Setting::parse("learned:16").unwrap(), Setting::learned(16));
        assert!(Setting::parse("mean").is_err());
    }
}
