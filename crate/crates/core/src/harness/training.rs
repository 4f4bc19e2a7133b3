//! Training data ingestion, model fitting and persistence, and the
//! one-second propagation-error comparison on held-out flights.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::{propagate, AccelModel, AnalyticModel, Control, HybridModel, Vec3, AXIS_NAMES};
use crate::error::{Error, Result};
use crate::flightlog::{read_log_file, write_log_file, LogRow, Rejected};
use crate::lwpr::LwprModel;
use crate::simworld::run_trial;

use super::config::{ExperimentConfig, Setting};

/// One regression sample: attitude and thrust in, acceleration out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub angles: Vec3,
    pub thrust: f64,
    pub accel: Vec3,
}

impl From<&LogRow> for Sample {
    fn from(row: &LogRow) -> Self {
        Self { angles: row.state.angles, thrust: row.command.thrust, accel: row.accel }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub samples: Vec<Sample>,
    pub rejected: Vec<(PathBuf, Rejected)>,
}

/// Reads flight logs in order and returns their samples in row order.
pub fn ingest_logs<P: AsRef<Path>>(paths: &[P]) -> Result<Ingested> {
    let mut out = Ingested::default();
    for path in paths {
        let path = path.as_ref();
        let parsed = read_log_file(path)?;
        out.samples.extend(parsed.rows.iter().map(Sample::from));
        out.rejected.extend(parsed.rejected.into_iter().map(|r| (path.to_path_buf(), r)));
    }
    Ok(out)
}

/// Trains the three per-axis models on `samples` in order.
pub fn fit_hybrid(samples: &[Sample], config: &ExperimentConfig) -> Result<HybridModel> {
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut model = HybridModel::new(config.lwpr.to_config())?;
    for s in samples {
        model.update(&s.angles, s.thrust, &s.accel)?;
    }
    Ok(model)
}

pub fn model_paths(dir: &Path) -> [PathBuf; 3] {
    AXIS_NAMES.map(|name| dir.join(format!("{name}.lwpr")))
}

pub fn save_model(model: &HybridModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (axis, path) in model.axes().iter().zip(model_paths(dir)) {
        std::fs::write(path, axis.to_bytes())?;
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<HybridModel> {
    let mut axes = Vec::with_capacity(3);
    for path in model_paths(dir) {
        let bytes =
            std::fs::read(&path).map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
        let model = LwprModel::from_bytes(&bytes)?;
        if model.input_dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, actual: model.input_dim() });
        }
        axes.push(model);
    }
    let axes: [LwprModel; 3] = axes.try_into().expect("three axes");
    Ok(HybridModel::from_axes(axes))
}

/// Flies `count` analytic-model trials on the ground-truth simulator with
/// seeds `first_seed..` and writes their logs to `dir`.
pub fn fly_analytic_logs(config: &ExperimentConfig, dir: &Path, first_seed: u64, count: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let setting = Setting { rollouts: Some(config.training.collect_rollouts), ..Setting::analytic() };
    let model = AnalyticModel { params: config.quad };
    let truth = config.ground_truth();
    let mut paths = Vec::with_capacity(count);
    for j in 0..count as u64 {
        let seed = first_seed + j;
        let pi = config.pi_config(&setting, seed)?;
        let result = run_trial(&config.task, &pi, &model, &truth, seed, config.sweep.max_steps, None)?;
        let path = dir.join(format!("flight_seed{seed}.csv"));
        write_log_file(&path, &result.log)?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub logs: Vec<PathBuf>,
    pub samples: usize,
    pub rejected: Vec<(PathBuf, Rejected)>,
    pub field_counts: [usize; 3],
    pub model_dir: PathBuf,
    pub model: HybridModel,
}

/// Ingests the configured logs (flying fresh analytic-model flights when
/// none are configured), fits the hybrid model and writes it to the model
/// directory.
pub fn train(config: &ExperimentConfig) -> Result<TrainSummary> {
    let logs = if config.training.logs.is_empty() {
        let dir = config.out_dir.join("training");
        fly_analytic_logs(config, &dir, config.training.collect_seed, config.training.collect_trials)?
    } else {
        config.training.logs.clone()
    };
    let ingested = ingest_logs(&logs)?;
    let model = fit_hybrid(&ingested.samples, config)?;
    let model_dir = config.model_dir();
    save_model(&model, &model_dir)?;
    Ok(TrainSummary {
        logs,
        samples: ingested.samples.len(),
        rejected: ingested.rejected,
        field_counts: model.field_counts(),
        model_dir,
        model,
    })
}

/// Mean absolute position error after one horizon of open-loop propagation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub segments: usize,
    pub steps: usize,
    pub analytic_error: Vec3,
    pub learned_error: Vec3,
}

/// Replays the logged commands of every `steps`-long segment (starting
/// every `stride` rows) through both models from the logged start state
/// and compares the final predicted position with the logged one.
pub fn propagation_errors<A: AccelModel, L: AccelModel>(
    flights: &[Vec<LogRow>],
    steps: usize,
    stride: usize,
    analytic: &A,
    learned: &L,
    config: &ExperimentConfig,
) -> Result<PropagationReport> {
    let sanity = config.controller.sanity;
    let mut sums = [[0.0; 3]; 2];
    let mut segments = 0;
    for rows in flights {
        let mut start = 0;
        while start + steps < rows.len() {
            let controls: Vec<Control> = rows[start..start + steps].iter().map(|r| r.command).collect();
            let from = &rows[start].state;
            let target = rows[start + steps].state.position;
            for (sum, model) in sums.iter_mut().zip([analytic as &dyn AccelModel, learned as &dyn AccelModel]) {
                let p = propagate(model, from, &controls, steps, &config.quad, None, &sanity)?;
                let end = p.states[steps].position;
                for i in 0..3 {
                    sum[i] += (end[i] - target[i]).abs();
                }
            }
            segments += 1;
            start += stride;
        }
    }
    if segments == 0 {
        return Err(Error::Config(format!("held-out flights are shorter than {steps} steps")));
    }
    let n = segments as f64;
    Ok(PropagationReport {
        segments,
        steps,
        analytic_error: sums[0].map(|s| s / n),
        learned_error: sums[1].map(|s| s / n),
    })
}

/// Flies the configured held-out flights and compares the unperturbed
/// analytic model with `learned` over one-horizon segments.
pub fn holdout_propagation(config: &ExperimentConfig, learned: &HybridModel) -> Result<PropagationReport> {
    let dir = config.out_dir.join("holdout");
    let paths = fly_analytic_logs(config, &dir, config.training.holdout_seed, config.training.holdout_trials)?;
    let mut flights = Vec::with_capacity(paths.len());
    for p in &paths {
        flights.push(read_log_file(p)?.rows);
    }
    propagation_errors(
        &flights,
        config.controller.horizon_steps,
        config.training.segment_stride,
        &AnalyticModel { params: config.quad },
        learned,
        config,
    )
}
