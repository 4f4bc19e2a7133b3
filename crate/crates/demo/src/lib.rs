//! WebAssembly bindings for the browser demo: an online regression
//! explorer, a steppable closed-loop flight and the obstacle cost field.

use wasm_bindgen::prelude::*;

use rhpi::controller::{receding_horizon_step, ControlPlan, PiConfig};
use rhpi::dynamics::{AnalyticModel, GroundTruth, QuadState};
use rhpi::harness::ExperimentConfig;
use rhpi::lwpr::{LwprConfig, LwprModel};
use rhpi::simworld::{
    advance_progress, crash_predicate, instantaneous_cost, obstacle_cost_grid, CrashKind, NavObjective, ProgressState,
    Task,
};

fn js_err(e: rhpi::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Scalar regression model fed one sample at a time.
#[wasm_bindgen]
pub struct CurveFit {
    model: LwprModel,
}

#[wasm_bindgen]
impl CurveFit {
    /// `width` is the receptive-field width for new fields.
    #[wasm_bindgen(constructor)]
    pub fn new(width: f64) -> Result<CurveFit, JsError> {
        let model = LwprModel::new(1, LwprConfig::with_widths(&[width])).map_err(js_err)?;
        Ok(Self { model })
    }

    pub fn add(&mut self, x: f64, y: f64) -> Result<(), JsError> {
        self.model.update(&[x], y).map_err(js_err)
    }

    #[wasm_bindgen(js_name = fieldCount)]
    pub fn field_count(&self) -> usize {
        self.model.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.model.fields().iter().map(|f| f.center[0]).collect()
    }

    /// `n` evenly spaced predictions over `[lo, hi]` as flat
    /// `(x, mean, variance)` triples. Empty before the first sample.
    pub fn curve(&self, lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64;
            if let Ok(p) = self.model.predict(&[x]) {
                out.extend([x, p.mean, p.variance]);
            }
        }
        out
    }
}

/// A closed-loop flight on the default task, advanced a few control
/// cycles at a time so the page can animate it.
#[wasm_bindgen]
pub struct Flight {
    task: Task,
    pi: PiConfig,
    truth: GroundTruth,
    model: AnalyticModel,
    plan: ControlPlan,
    state: QuadState,
    progress: ProgressState,
    cycle: u64,
    max_steps: u64,
    total_cost: f64,
    outcome: Option<&'static str>,
}

#[wasm_bindgen]
impl Flight {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, rollouts: usize, max_steps: u32) -> Result<Flight, JsError> {
        let config = ExperimentConfig::default();
        let setting = rhpi::harness::Setting { rollouts: Some(rollouts), ..rhpi::harness::Setting::analytic() };
        let pi = config.pi_config(&setting, seed as u64).map_err(js_err)?;
        let task = config.task.clone();
        Ok(Self {
            plan: ControlPlan::hover(pi.horizon_steps, &config.quad),
            state: QuadState::at(task.waypoints[0]),
            progress: ProgressState::start(&task),
            truth: config.ground_truth(),
            model: AnalyticModel { params: config.quad },
            task,
            pi,
            cycle: 0,
            max_steps: max_steps as u64,
            total_cost: 0.0,
            outcome: None,
        })
    }

    /// Runs up to `cycles` control cycles; returns false once the flight
    /// has ended.
    pub fn advance(&mut self, cycles: u32) -> Result<bool, JsError> {
        for _ in 0..cycles {
            if self.outcome.is_some() {
                break;
            }
            self.outcome = match crash_predicate(&self.state, &self.task) {
                CrashKind::Crashed => Some("crashed"),
                CrashKind::OutOfBounds => Some("out_of_bounds"),
                CrashKind::None => None,
            };
            if self.outcome.is_some() {
                break;
            }
            self.progress = advance_progress(&self.state, &self.task, &self.progress);
            if self.progress.is_complete(&self.task) {
                self.outcome = Some("completed");
                break;
            }
            if self.cycle >= self.max_steps {
                self.outcome = Some("timeout");
                break;
            }
            let objective = NavObjective::new(&self.task, &self.progress);
            let params = self.truth.params;
            let step =
                receding_horizon_step(&self.state, &self.plan, &self.pi, &self.model, &objective, &params, self.cycle)
                    .map_err(js_err)?;
            self.total_cost += instantaneous_cost(&self.state, &self.task, &self.progress) * params.dt;
            self.state = self.truth.step(&self.state, &step.control);
            self.plan = step.carried;
            self.cycle += 1;
        }
        Ok(self.outcome.is_none())
    }

    /// Current position `(x, y, z)`.
    pub fn position(&self) -> Vec<f64> {
        self.state.position.to_vec()
    }

    /// Planned horizon positions under the planner's model, flat `(x, y)`.
    pub fn plan(&self) -> Vec<f64> {
        let mut s = self.state;
        let mut out = Vec::with_capacity(2 * self.plan.len());
        for u in &self.plan.controls {
            s = rhpi::dynamics::step_analytic(&s, u, &self.truth.params);
            out.extend([s.position[0], s.position[1]]);
        }
        out
    }

    pub fn time(&self) -> f64 {
        self.cycle as f64 * self.truth.params.dt
    }

    #[wasm_bindgen(js_name = totalCost)]
    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn switches(&self) -> usize {
        self.progress.completed_switches
    }

    #[wasm_bindgen(js_name = activeWaypoint)]
    pub fn active_waypoint(&self) -> usize {
        self.progress.current_waypoint
    }

    /// `"flying"` until the trial ends, then its outcome.
    pub fn outcome(&self) -> String {
        self.outcome.unwrap_or("flying").to_string()
    }
}

/// Obstacle part of the navigation cost on an `n × n` grid over the default
/// arena, row-major with y outer.
#[wasm_bindgen(js_name = obstacleCost)]
pub fn obstacle_cost(n: usize) -> Vec<f64> {
    obstacle_cost_grid(&Task::default(), n, n).iter().map(|c| c[2]).collect()
}

/// Default arena bounds `[min_x, min_y, max_x, max_y]`.
#[wasm_bindgen]
pub fn arena() -> Vec<f64> {
    let a = Task::default().arena;
    vec![a.min[0], a.min[1], a.max[0], a.max[1]]
}

/// Default waypoints, flat `(x, y)`.
#[wasm_bindgen]
pub fn waypoints() -> Vec<f64> {
    Task::default().waypoints.iter().flat_map(|w| [w[0], w[1]]).collect()
}

/// Default obstacle centers, flat `(x, y)`.
#[wasm_bindgen]
pub fn obstacles() -> Vec<f64> {
    Task::default().obstacles.iter().flat_map(|o| *o).collect()
}
