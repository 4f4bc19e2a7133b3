//! Optimizer throughput.

use std::time::Instant;

use serde::Serialize;

use crate::controller::{optimize, ControlPlan, PiConfig};
use crate::dynamics::{AccelModel, AnalyticModel, HybridModel, QuadState};
use crate::error::Result;
use crate::simworld::{NavObjective, ProgressState};

use super::config::{ExperimentConfig, ModelKind, Setting};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub case: String,
    pub model: String,
    pub sub_rollouts: usize,
    pub rollouts: usize,
    pub horizon_steps: usize,
    pub workers: usize,
    pub ms_per_iteration: f64,
    /// Propagated model steps per second, counting every sub-rollout.
    pub rollout_steps_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub rows: Vec<BenchRow>,
    /// Optimized plans agreed bit for bit across worker counts.
    pub identical_across_workers: bool,
}

/// The three benchmark cases: analytic with one sub-rollout, learned with
/// one and with 32.
pub fn bench_settings() -> [Setting; 3] {
    [
        Setting { rollouts: Some(1000), ..Setting::analytic() },
        Setting { rollouts: Some(1000), ..Setting::learned(1) },
        Setting::learned(32),
    ]
}

/// Worker counts to compare: one and every available core.
pub fn worker_counts() -> Vec<usize> {
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cfg!(feature = "parallel") && max > 1 {
        vec![1, max]
    } else {
        vec![1]
    }
}

fn run_in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

/// Times one `optimize` call of `config.bench.iterations` iterations,
/// `config.bench.repeats` times, from a hover state at the first waypoint
/// with the second waypoint active. Returns the median milliseconds per
/// iteration and the optimized plan.
fn time_case(config: &ExperimentConfig, pi: &PiConfig, model: &dyn AccelModel) -> Result<(f64, ControlPlan)> {
    let task = &config.task;
    let state = QuadState::at(task.waypoints[0]);
    let progress = ProgressState::start(task);
    let objective = NavObjective::new(task, &progress);
    let plan = ControlPlan::hover(pi.horizon_steps, &config.quad);
    let mut times = Vec::with_capacity(config.bench.repeats);
    let mut last = plan.clone();
    // one untimed call to warm caches and the thread pool
    optimize(&state, &plan, pi, model, &objective, &config.quad, 0)?;
    for _ in 0..config.bench.repeats {
        let start = Instant::now();
        last = optimize(&state, &plan, pi, model, &objective, &config.quad, 0)?;
        times.push(start.elapsed().as_secs_f64() * 1e3 / pi.iterations_per_step as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok((times[times.len() / 2], last))
}

/// Benchmarks every case at every worker count. `learned` is the model
/// used by the learned cases.
pub fn benchmark(config: &ExperimentConfig, learned: &HybridModel) -> Result<ThroughputReport> {
    let analytic = AnalyticModel { params: config.quad };
    let mut rows = Vec::new();
    let mut identical = true;
    for setting in bench_settings() {
        let pi = PiConfig { iterations_per_step: config.bench.iterations, ..config.pi_config(&setting, config.seed)? };
        let model: &dyn AccelModel = match setting.model {
            ModelKind::Analytic => &analytic,
            ModelKind::Learned => learned,
        };
        let mut reference: Option<ControlPlan> = None;
        for workers in worker_counts() {
            let (ms, plan) = run_in_pool(workers, || time_case(config, &pi, model))??;
            match &reference {
                None => reference = Some(plan),
                Some(r) => identical &= plans_identical(r, &plan),
            }
            let steps = (pi.num_rollouts * pi.horizon_steps * pi.sub_rollouts) as f64;
            rows.push(BenchRow {
                case: setting.label(),
                model: setting.model.as_str().to_string(),
                sub_rollouts: pi.sub_rollouts,
                rollouts: pi.num_rollouts,
                horizon_steps: pi.horizon_steps,
                workers,
                ms_per_iteration: ms,
                rollout_steps_per_sec: steps / (ms * 1e-3),
            });
        }
    }
    Ok(ThroughputReport { rows, identical_across_workers: identical })
}

pub fn plans_identical(a: &ControlPlan, b: &ControlPlan) -> bool {
    a.controls.len() == b.controls.len()
        && a.controls
            .iter()
            .zip(&b.controls)
            .all(|(x, y)| x.as_array().iter().zip(y.as_array()).all(|(p, q)| p.to_bits() == q.to_bits()))
}

pub fn write_throughput(report: &ThroughputReport, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn render_throughput(report: &ThroughputReport) -> String {
    let mut out =
        format!("{:<12} {:>5} {:>3} {:>8} {:>12} {:>16}\n", "case", "K", "M", "workers", "ms/iter", "steps/s");
    for r in &report.rows {
        out.push_str(&format!(
            "{:<12} {:>5} {:>3} {:>8} {:>12.2} {:>16.0}\n",
            r.case, r.rollouts, r.sub_rollouts, r.workers, r.ms_per_iteration, r.rollout_steps_per_sec
        ));
    }
    out.push_str(&format!(
        "plans identical across worker counts: {}\n",
        if report.identical_across_workers { "yes" } else { "NO" }
    ));
    out
}
