//! The waypoint navigation task: cost function, waypoint progression, crash
//! detection, closed-loop trials against a ground-truth simulator and the
//! per-trial metrics.

use crate::controller::{plan_cost, receding_horizon_step, ControlPlan, Objective, PiConfig};
use crate::dynamics::{AccelModel, Control, GroundTruth, HybridModel, QuadParams, QuadState, Vec3};
use crate::error::{Error, Result};
use crate::flightlog::{LogRow, TrialColumns};
use serde::{Deserialize, Serialize};

/// Number of closest obstacle passes averaged by the safety metric.
pub const CLOSEST_PASSES: usize = 8;

/// Rise above a running minimum that closes an obstacle pass, in meters.
pub const PASS_HYSTERESIS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub min: Vec3,
    pub max: Vec3,
}

impl Arena {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Task {
    pub waypoints: Vec<Vec3>,
    /// Obstacle positions in the xy plane.
    pub obstacles: Vec<[f64; 2]>,
    pub waypoint_radius: f64,
    pub laps: usize,
    pub arena: Arena,
    pub z_floor: f64,
}

impl Default for Task {
    /// Three waypoints on an equilateral triangle (side 2.5 m, 1 m up)
    /// inside a 4 m × 4 m × 2.5 m arena, with an obstacle at the middle of
    /// every leg so each leg forces a pass around it.
    fn default() -> Self {
        let circumradius = 2.5 / 3f64.sqrt();
        let waypoints: Vec<Vec3> = [90.0f64, 210.0, 330.0]
            .iter()
            .map(|deg| {
                let a = deg.to_radians();
                [circumradius * a.cos(), circumradius * a.sin(), 1.0]
            })
            .collect();
        let obstacles = (0..3)
            .map(|i| {
                let (a, b) = (waypoints[i], waypoints[(i + 1) % 3]);
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            })
            .collect();
        Self {
            waypoints,
            obstacles,
            waypoint_radius: 0.25,
            laps: 4,
            arena: Arena { min: [-2.0, -2.0, 0.0], max: [2.0, 2.0, 2.5] },
            z_floor: 0.05,
        }
    }
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::Config("task needs at least one waypoint".into()));
        }
        if !(self.waypoint_radius > 0.0) {
            return Err(Error::Config("waypoint_radius must be > 0".into()));
        }
        if let Some(w) = self.waypoints.iter().find(|w| !self.arena.contains(w)) {
            return Err(Error::Config(format!("waypoint {w:?} outside the arena")));
        }
        Ok(())
    }

    pub fn required_switches(&self) -> usize {
        self.waypoints.len() * self.laps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgressState {
    pub current_waypoint: usize,
    pub completed_switches: usize,
    pub crashed: bool,
}

impl ProgressState {
    /// The vehicle starts on waypoint 0 heading for waypoint 1.
    pub fn start(task: &Task) -> Self {
        Self { current_waypoint: 1 % task.waypoints.len(), completed_switches: 0, crashed: false }
    }

    pub fn is_complete(&self, task: &Task) -> bool {
        self.completed_switches >= task.required_switches()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashKind {
    None,
    Crashed,
    OutOfBounds,
}

pub fn crash_predicate(state: &QuadState, task: &Task) -> CrashKind {
    if state.position[2] <= task.z_floor {
        CrashKind::Crashed
    } else if !task.arena.contains(&state.position) {
        CrashKind::OutOfBounds
    } else {
        CrashKind::None
    }
}

/// The navigation state cost for a given target and crash indicator:
///
/// ```text
/// q = (x-Wx)² + (y-Wy)² + 10 (z-Wz)² + (φ²+θ²+ψ²)/5 + (ẋ²+ẏ²+ż²)/10
///     + 100 Σ_i exp(-10 (dx_i² + dy_i²)) + 10 C
/// ```
#[inline]
pub fn state_cost(state: &QuadState, waypoint: &Vec3, obstacles: &[[f64; 2]], crash: bool) -> f64 {
    let p = &state.position;
    let [ex, ey, ez] = [p[0] - waypoint[0], p[1] - waypoint[1], p[2] - waypoint[2]];
    let a = &state.angles;
    let v = &state.velocity;
    let mut q = ex * ex
        + ey * ey
        + 10.0 * ez * ez
        + 0.2 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
        + 0.1 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    for o in obstacles {
        let (dx, dy) = (p[0] - o[0], p[1] - o[1]);
        q += 100.0 * (-10.0 * (dx * dx + dy * dy)).exp();
    }
    if crash {
        q += 10.0;
    }
    q
}

pub fn instantaneous_cost(state: &QuadState, task: &Task, progress: &ProgressState) -> f64 {
    let crash = crash_predicate(state, task) != CrashKind::None;
    state_cost(state, &task.waypoints[progress.current_waypoint], &task.obstacles, crash)
}

/// Switches to the next waypoint when the vehicle is strictly within the
/// waypoint radius of the active one.
pub fn advance_progress(state: &QuadState, task: &Task, progress: &ProgressState) -> ProgressState {
    if progress.is_complete(task) {
        return *progress;
    }
    let w = &task.waypoints[progress.current_waypoint];
    let d2: f64 = (0..3).map(|i| (state.position[i] - w[i]).powi(2)).sum();
    if d2.sqrt() < task.waypoint_radius {
        ProgressState {
            current_waypoint: (progress.current_waypoint + 1) % task.waypoints.len(),
            completed_switches: progress.completed_switches + 1,
            crashed: progress.crashed,
        }
    } else {
        *progress
    }
}

/// Planner objective for the currently active waypoint. Rollouts never see
/// future waypoint switches.
#[derive(Debug, Clone, Copy)]
pub struct NavObjective<'a> {
    pub task: &'a Task,
    pub waypoint: Vec3,
}

impl<'a> NavObjective<'a> {
    pub fn new(task: &'a Task, progress: &ProgressState) -> Self {
        Self { task, waypoint: task.waypoints[progress.current_waypoint] }
    }
}

impl Objective for NavObjective<'_> {
    #[inline]
    fn stage_cost(&self, state: &QuadState, crashed: bool) -> f64 {
        state_cost(state, &self.waypoint, &self.task.obstacles, crashed)
    }

    #[inline]
    fn is_crash(&self, state: &QuadState) -> bool {
        crash_predicate(state, self.task) != CrashKind::None
    }
}

/// Minimum xy distance from a point to any obstacle.
pub fn obstacle_distance(xy: [f64; 2], obstacles: &[[f64; 2]]) -> f64 {
    obstacles.iter().map(|o| ((xy[0] - o[0]).powi(2) + (xy[1] - o[1]).powi(2)).sqrt()).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PassMetric {
    /// Minimum obstacle distance of every detected pass, in trajectory order.
    pub passes: Vec<f64>,
    /// Mean of the [`CLOSEST_PASSES`] smallest passes (or of all, if fewer).
    pub avg_closest: Option<f64>,
}

/// Splits the obstacle-distance signal into passes: a pass is a local
/// minimum closed by a rise of at least [`PASS_HYSTERESIS`]; the next pass
/// can only start after the signal falls by the same margin from its peak.
pub fn closest_pass_metric(xy: &[[f64; 2]], obstacles: &[[f64; 2]]) -> PassMetric {
    if obstacles.is_empty() || xy.is_empty() {
        return PassMetric::default();
    }
    let mut passes = Vec::new();
    let mut seeking_min = true;
    let mut extreme = obstacle_distance(xy[0], obstacles);
    for p in &xy[1..] {
        let d = obstacle_distance(*p, obstacles);
        if seeking_min {
            if d < extreme {
                extreme = d;
            } else if d >= extreme + PASS_HYSTERESIS {
                passes.push(extreme);
                seeking_min = false;
                extreme = d;
            }
        } else if d > extreme {
            extreme = d;
        } else if d <= extreme - PASS_HYSTERESIS {
            seeking_min = true;
            extreme = d;
        }
    }
    if seeking_min {
        passes.push(extreme);
    }
    let mut sorted = passes.clone();
    sorted.sort_by(f64::total_cmp);
    let take = sorted.len().min(CLOSEST_PASSES);
    let avg_closest = Some(sorted[..take].iter().sum::<f64>() / take as f64);
    PassMetric { passes, avg_closest }
}

/// Obstacle part of the cost on a regular xy grid over the arena, as
/// `(x, y, cost)` triples in row-major order (y outer).
pub fn obstacle_cost_grid(task: &Task, nx: usize, ny: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = task.arena.min[1] + (task.arena.max[1] - task.arena.min[1]) * j as f64 / (ny.max(2) - 1) as f64;
        for i in 0..nx {
            let x = task.arena.min[0] + (task.arena.max[0] - task.arena.min[0]) * i as f64 / (nx.max(2) - 1) as f64;
            let c: f64 =
                task.obstacles.iter().map(|o| 100.0 * (-10.0 * ((x - o[0]).powi(2) + (y - o[1]).powi(2))).exp()).sum();
            out.push([x, y, c]);
        }
    }
    out
}

/// Something that picks a command each control cycle.
pub trait Pilot {
    /// Returns the command to execute and the planned horizon cost.
    fn act(&mut self, state: &QuadState, objective: &NavObjective<'_>, cycle: u64) -> Result<(Control, f64)>;
}

/// Receding-horizon path integral pilot with warm starting.
pub struct PiPilot<'m, M: AccelModel + ?Sized> {
    pub config: PiConfig,
    pub params: QuadParams,
    pub model: &'m M,
    plan: ControlPlan,
}

impl<'m, M: AccelModel + ?Sized> PiPilot<'m, M> {
    pub fn new(config: PiConfig, params: QuadParams, model: &'m M) -> Self {
        let plan = ControlPlan::hover(config.horizon_steps, &params);
        Self { config, params, model, plan }
    }
}

impl<M: AccelModel + ?Sized> Pilot for PiPilot<'_, M> {
    fn act(&mut self, state: &QuadState, objective: &NavObjective<'_>, cycle: u64) -> Result<(Control, f64)> {
        let step = receding_horizon_step(state, &self.plan, &self.config, self.model, objective, &self.params, cycle)?;
        let cost = plan_cost(state, &step.optimized, self.model, objective, &self.config, &self.params)?;
        self.plan = step.carried;
        Ok((step.control, cost))
    }
}

/// Always commands hover thrust with zero rates.
pub struct HoverPilot(pub QuadParams);

impl Pilot for HoverPilot {
    fn act(&mut self, _: &QuadState, _: &NavObjective<'_>, _: u64) -> Result<(Control, f64)> {
        Ok((Control::hover(&self.0), 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Crashed,
    OutOfBounds,
    Timeout,
    /// The trial stopped on an error (for example a model that cannot be
    /// evaluated); only produced by experiment drivers.
    Failed,
}

impl Outcome {
    pub const ALL: [Outcome; 5] =
        [Outcome::Completed, Outcome::Crashed, Outcome::OutOfBounds, Outcome::Timeout, Outcome::Failed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Crashed => "crashed",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Timeout => "timeout",
            Outcome::Failed => "failed",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.as_str() == text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub outcome: Outcome,
    pub completed_switches: usize,
    /// Time flown until the trial ended, in seconds.
    pub completion_time: f64,
    /// Σ q·dt over executed steps.
    pub total_cost: f64,
    /// Mean over cycles of planned horizon cost divided by horizon length.
    pub avg_cost_per_sec_horizon: f64,
    pub closest_passes: Vec<f64>,
    pub avg_8_closest: Option<f64>,
    /// Mean learned-model variance along the executed trajectory, per axis.
    pub mean_prediction_variance: Option<Vec3>,
    pub log: Vec<LogRow>,
}

/// Summary metrics from a trial log; pure function of the rows.
pub fn metrics_from_log(rows: &[LogRow], task: &Task, dt: f64, horizon_seconds: f64) -> TrialMetrics {
    let mut total_cost = 0.0;
    let mut horizon = 0.0;
    let mut var = [0.0; 3];
    let mut var_ok = !rows.is_empty();
    for r in rows {
        let tc = r.trial.unwrap_or(TrialColumns {
            active_waypoint: 0,
            q_cost: 0.0,
            lwpr_variance: [f64::NAN; 3],
            horizon_cost: 0.0,
        });
        total_cost += tc.q_cost * dt;
        horizon += tc.horizon_cost;
        for i in 0..3 {
            var[i] += tc.lwpr_variance[i];
        }
        var_ok &= tc.lwpr_variance.iter().all(|v| v.is_finite());
    }
    let n = rows.len().max(1) as f64;
    let xy: Vec<[f64; 2]> = rows.iter().map(|r| [r.state.position[0], r.state.position[1]]).collect();
    let passes = closest_pass_metric(&xy, &task.obstacles);
    TrialMetrics {
        completion_time: rows.len() as f64 * dt,
        total_cost,
        avg_cost_per_sec_horizon: horizon / n / horizon_seconds,
        closest_passes: passes.passes,
        avg_8_closest: passes.avg_closest,
        mean_prediction_variance: var_ok.then(|| var.map(|v| v / n)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialMetrics {
    pub completion_time: f64,
    pub total_cost: f64,
    pub avg_cost_per_sec_horizon: f64,
    pub closest_passes: Vec<f64>,
    pub avg_8_closest: Option<f64>,
    pub mean_prediction_variance: Option<Vec3>,
}

/// Flies one closed-loop trial. `pilot` plans, `truth` advances the real
/// state. When `probe` is given its predicted variance at each executed
/// command is logged.
pub fn run_trial_with<P: Pilot + ?Sized>(
    task: &Task,
    pilot: &mut P,
    truth: &GroundTruth,
    horizon_seconds: f64,
    max_steps: usize,
    probe: Option<&HybridModel>,
) -> Result<TrialResult> {
    task.validate()?;
    let params = truth.params;
    let dt = params.dt;
    let mut state = QuadState::at(task.waypoints[0]);
    let mut progress = ProgressState::start(task);
    let mut log = Vec::new();

    let outcome = loop {
        match crash_predicate(&state, task) {
            CrashKind::Crashed => break Outcome::Crashed,
            CrashKind::OutOfBounds => break Outcome::OutOfBounds,
            CrashKind::None => {}
        }
        progress = advance_progress(&state, task, &progress);
        if progress.is_complete(task) {
            break Outcome::Completed;
        }
        let cycle = log.len();
        if cycle >= max_steps {
            break Outcome::Timeout;
        }
        let objective = NavObjective::new(task, &progress);
        let (control, horizon_cost) = pilot.act(&state, &objective, cycle as u64)?;
        let next = truth.step(&state, &control);
        let accel = [0, 1, 2].map(|i| (next.velocity[i] - state.velocity[i]) / dt);
        let lwpr_variance = match probe {
            Some(h) => h.accel(&state.angles, control.thrust)?.variance,
            None => [f64::NAN; 3],
        };
        log.push(LogRow {
            t: cycle as f64 * dt,
            state,
            command: control,
            accel,
            trial: Some(TrialColumns {
                active_waypoint: progress.current_waypoint,
                q_cost: instantaneous_cost(&state, task, &progress),
                lwpr_variance,
                horizon_cost,
            }),
        });
        state = next;
    };

    let m = metrics_from_log(&log, task, dt, horizon_seconds);
    Ok(TrialResult {
        outcome,
        completed_switches: progress.completed_switches,
        completion_time: m.completion_time,
        total_cost: m.total_cost,
        avg_cost_per_sec_horizon: m.avg_cost_per_sec_horizon,
        closest_passes: m.closest_passes,
        avg_8_closest: m.avg_8_closest,
        mean_prediction_variance: m.mean_prediction_variance,
        log,
    })
}

/// Flies a trial with the path integral pilot planning on `model`, seeded
/// with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial<M: AccelModel + ?Sized>(
    task: &Task,
    config: &PiConfig,
    model: &M,
    truth: &GroundTruth,
    seed: u64,
    max_steps: usize,
    probe: Option<&HybridModel>,
) -> Result<TrialResult> {
    let config = PiConfig { rng_seed: seed, ..config.clone() };
    let horizon_seconds = config.horizon_steps as f64 * truth.params.dt;
    let mut pilot = PiPilot::new(config, truth.params, model);
    run_trial_with(task, &mut pilot, truth, horizon_seconds, max_steps, probe)
}
