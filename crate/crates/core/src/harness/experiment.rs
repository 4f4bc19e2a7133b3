//! Trial sweeps across model settings and the aggregated report.
//!
//! Every number in a report is derived from the trajectory logs and the
//! per-trial outcome index written next to them, so a report can be rebuilt
//! from disk with [`report_from_dir`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{AccelModel, AnalyticModel, HybridModel};
use crate::error::{Error, Result};
use crate::flightlog::{read_log_file, write_log_file, LogRow};
use crate::simworld::{metrics_from_log, run_trial, Outcome, Task};

use super::config::{ExperimentConfig, ModelKind, Setting};
use super::training::PropagationReport;

/// One flown trial: enough to recompute all of its metrics.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub setting: Setting,
    pub seed: u64,
    pub outcome: Outcome,
    pub rows: Vec<LogRow>,
}

/// One line of the per-setting table. Averages cover completed trials
/// only and are NaN when none completed. Variances are NaN for the
/// analytic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRow {
    pub setting: String,
    pub model: String,
    pub sub_rollouts: usize,
    pub rollouts: usize,
    pub iterations: usize,
    pub trials: usize,
    pub completed: usize,
    pub crashed: usize,
    pub out_of_bounds: usize,
    pub timeout: usize,
    pub failed: usize,
    pub avg_completion_time: f64,
    pub avg_total_cost: f64,
    pub avg_cost_per_sec: f64,
    pub avg_8_closest: f64,
    pub var_ax: f64,
    pub var_ay: f64,
    pub var_az: f64,
    /// Trial seeds, separated by `;`.
    pub seeds: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<SettingRow>,
    pub propagation: Option<PropagationReport>,
}

/// Aggregates the trials of one setting.
pub fn summarize_setting(
    setting: &Setting,
    trials: &[&TrialRecord],
    task: &Task,
    dt: f64,
    horizon_seconds: f64,
) -> SettingRow {
    let count = |o: Outcome| trials.iter().filter(|t| t.outcome == o).count();
    let done: Vec<_> = trials
        .iter()
        .filter(|t| t.outcome == Outcome::Completed)
        .map(|t| metrics_from_log(&t.rows, task, dt, horizon_seconds))
        .collect();
    let avg = |f: &dyn Fn(usize) -> Option<f64>| {
        let vals: Vec<f64> = (0..done.len()).filter_map(f).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let var = |axis: usize| avg(&|i| done[i].mean_prediction_variance.map(|v| v[axis]));
    SettingRow {
        setting: setting.label(),
        model: setting.model.as_str().to_string(),
        sub_rollouts: setting.sub_rollouts,
        rollouts: setting.rollouts(),
        iterations: setting.iterations(),
        trials: trials.len(),
        completed: done.len(),
        crashed: count(Outcome::Crashed),
        out_of_bounds: count(Outcome::OutOfBounds),
        timeout: count(Outcome::Timeout),
        failed: count(Outcome::Failed),
        avg_completion_time: avg(&|i| Some(done[i].completion_time)),
        avg_total_cost: avg(&|i| Some(done[i].total_cost)),
        avg_cost_per_sec: avg(&|i| Some(done[i].avg_cost_per_sec_horizon)),
        avg_8_closest: avg(&|i| done[i].avg_8_closest),
        var_ax: var(0),
        var_ay: var(1),
        var_az: var(2),
        seeds: trials.iter().map(|t| t.seed.to_string()).collect::<Vec<_>>().join(";"),
    }
}

/// Builds the report from flown trials, one row per configured setting in
/// configuration order.
pub fn build_report(
    config: &ExperimentConfig,
    records: &[TrialRecord],
    propagation: Option<PropagationReport>,
) -> MetricsReport {
    let rows = config
        .sweep
        .settings
        .iter()
        .map(|s| {
            let trials: Vec<&TrialRecord> = records.iter().filter(|r| &r.setting == s).collect();
            summarize_setting(s, &trials, &config.task, config.quad.dt, config.horizon_seconds())
        })
        .collect();
    MetricsReport { rows, propagation }
}

/// Flies one trial of `setting` with `seed`.
pub fn fly_setting(
    config: &ExperimentConfig,
    setting: &Setting,
    learned: Option<&HybridModel>,
    seed: u64,
) -> Result<TrialRecord> {
    let pi = config.pi_config(setting, seed)?;
    let truth = config.ground_truth();
    let analytic = AnalyticModel { params: config.quad };
    let (model, probe): (&dyn AccelModel, Option<&HybridModel>) = match setting.model {
        ModelKind::Analytic => (&analytic, None),
        ModelKind::Learned => {
            let h =
                learned.ok_or_else(|| Error::Config(format!("setting `{}` needs a trained model", setting.label())))?;
            (h, Some(h))
        }
    };
    let result = run_trial(&config.task, &pi, model, &truth, seed, config.sweep.max_steps, probe)?;
    Ok(TrialRecord { setting: setting.clone(), seed, outcome: result.outcome, rows: result.log })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    setting: String,
    seed: u64,
    outcome: String,
    log: String,
}

fn log_name(setting: &Setting, seed: u64) -> String {
    format!("{}_seed{seed}.csv", setting.label())
}

/// Runs every configured setting for `sweep.trials` seeds, writes all
/// trajectory logs, the outcome index and the report to the output
/// directory, and returns the report. A trial that errors is recorded with
/// outcome `failed` rather than aborting the sweep; `progress` is called
/// after each trial.
pub fn run_experiment(
    config: &ExperimentConfig,
    learned: Option<&HybridModel>,
    propagation: Option<PropagationReport>,
    mut progress: impl FnMut(&TrialRecord),
) -> Result<MetricsReport> {
    let trials_dir = config.out_dir.join("trials");
    std::fs::create_dir_all(&trials_dir)?;
    let mut records = Vec::new();
    let mut index = Vec::new();
    for setting in &config.sweep.settings {
        for j in 0..config.sweep.trials as u64 {
            let seed = config.seed + j;
            let record = match fly_setting(config, setting, learned, seed) {
                Ok(r) => r,
                Err(e @ Error::Config(_)) => return Err(e),
                Err(_) => TrialRecord { setting: setting.clone(), seed, outcome: Outcome::Failed, rows: Vec::new() },
            };
            let name = log_name(setting, seed);
            write_log_file(&trials_dir.join(&name), &record.rows)?;
            index.push(IndexEntry {
                setting: setting.label(),
                seed,
                outcome: record.outcome.as_str().to_string(),
                log: name,
            });
            progress(&record);
            records.push(record);
        }
    }
    let mut w = csv::Writer::from_path(trials_dir.join("index.csv"))?;
    for entry in &index {
        w.serialize(entry)?;
    }
    w.flush()?;

    let report = build_report(config, &records, propagation);
    write_report(&report, &config.out_dir)?;
    Ok(report)
}

/// Rebuilds the per-setting rows from the logs and outcome index of a
/// finished sweep.
pub fn report_from_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<MetricsReport> {
    let trials_dir = out_dir.join("trials");
    let mut rdr = csv::Reader::from_path(trials_dir.join("index.csv"))?;
    let mut records = Vec::new();
    for entry in rdr.deserialize() {
        let entry: IndexEntry = entry?;
        let Some(setting) = config.sweep.settings.iter().find(|s| s.label() == entry.setting) else {
            continue;
        };
        let outcome = Outcome::parse(&entry.outcome)
            .ok_or_else(|| Error::Config(format!("unknown outcome `{}` in index", entry.outcome)))?;
        let rows = read_log_file(&trials_dir.join(&entry.log))?.rows;
        records.push(TrialRecord { setting: setting.clone(), seed: entry.seed, outcome, rows });
    }
    Ok(build_report(config, &records, None))
}

pub fn report_paths(out_dir: &Path) -> (PathBuf, PathBuf) {
    (out_dir.join("report.csv"), out_dir.join("report.txt"))
}

/// Writes `report.csv` (one row per setting, header = field names) and a
/// human-readable `report.txt`.
pub fn write_report(report: &MetricsReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (csv_path, txt_path) = report_paths(out_dir);
    let mut w = csv::Writer::from_path(csv_path)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    if let Some(p) = &report.propagation {
        let mut w = csv::Writer::from_path(out_dir.join("propagation.csv"))?;
        w.write_record(["axis", "analytic_error", "learned_error", "segments", "steps"])?;
        for (i, axis) in ["x", "y", "z"].iter().enumerate() {
            w.write_record([
                axis.to_string(),
                p.analytic_error[i].to_string(),
                p.learned_error[i].to_string(),
                p.segments.to_string(),
                p.steps.to_string(),
            ])?;
        }
        w.flush()?;
    }
    std::fs::write(txt_path, render_report(report))?;
    Ok(())
}

fn fmt(v: f64, digits: usize) -> String {
    if v.is_nan() {
        "-".to_string()
    } else {
        format!("{v:.digits$}")
    }
}

pub fn render_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>5} {:>3} {:>5} {:>4} {:>4} {:>4} {:>4} {:>4} {:>8} {:>9} {:>8} {:>8} {:>7} {:>7} {:>7}",
        "setting",
        "K",
        "it",
        "done",
        "crsh",
        "oob",
        "tout",
        "fail",
        "n",
        "time_s",
        "cost",
        "cost/s",
        "closest",
        "var_ax",
        "var_ay",
        "var_az"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>3} {:>5} {:>4} {:>4} {:>4} {:>4} {:>4} {:>8} {:>9} {:>8} {:>8} {:>7} {:>7} {:>7}",
            r.setting,
            r.rollouts,
            r.iterations,
            r.completed,
            r.crashed,
            r.out_of_bounds,
            r.timeout,
            r.failed,
            r.trials,
            fmt(r.avg_completion_time, 2),
            fmt(r.avg_total_cost, 1),
            fmt(r.avg_cost_per_sec, 2),
            fmt(r.avg_8_closest, 3),
            fmt(r.var_ax, 3),
            fmt(r.var_ay, 3),
            fmt(r.var_az, 3),
        );
    }
    if let Some(p) = &report.propagation {
        let _ = writeln!(out, "\n{}-step propagation error over {} held-out segments (m)", p.steps, p.segments);
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8}", "model", "x", "y", "z");
        for (name, e) in [("analytic", p.analytic_error), ("learned", p.learned_error)] {
            let _ = writeln!(out, "{:<10} {:>8.4} {:>8.4} {:>8.4}", name, e[0], e[1], e[2]);
        }
    }
    out
}
