//! Receding-horizon path integral control.
//!
//! Each optimization iteration perturbs the current plan with Gaussian
//! exploration noise, rolls every perturbed plan through the planning model
//! (optionally `M` times through a probabilistic model, averaging the
//! resulting costs), and moves the plan toward the noise of cheap rollouts
//! using per-timestep weights
//!
//! ```text
//! w_k(i) ∝ exp(-(S_k(i) - min_k S_k(i)) / λ)
//! ```
//!
//! where `S_k(i)` is the cost-to-go of rollout `k` from timestep `i`. The
//! receding-horizon loop runs a fixed number of iterations per control
//! cycle, executes the first control, and carries the remainder of the plan
//! into the next cycle.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{
    advance_attitude, advance_translation, AccelDist, AccelModel, Control, QuadParams, QuadState, SanityBox, Vec3,
};
use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    pub controls: Vec<Control>,
    pub dt: f64,
    pub origin_time: f64,
}

impl ControlPlan {
    pub fn hover(steps: usize, params: &QuadParams) -> Self {
        Self { controls: vec![Control::hover(params); steps], dt: params.dt, origin_time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    /// Drops the first control and repeats the last one at the end.
    pub fn shifted(&self) -> Self {
        let mut controls = Vec::with_capacity(self.controls.len());
        controls.extend_from_slice(&self.controls[1..]);
        controls.push(*self.controls.last().expect("plans are never empty"));
        Self { controls, dt: self.dt, origin_time: self.origin_time + self.dt }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiConfig {
    pub num_rollouts: usize,
    pub sub_rollouts: usize,
    pub horizon_steps: usize,
    pub iterations_per_step: usize,
    pub temperature: f64,
    /// Standard deviations for (roll rate, pitch rate, yaw rate, thrust).
    pub exploration_std: [f64; 4],
    pub rng_seed: u64,
    /// Upper bound applied to every cost-to-go.
    pub cost_ceiling: f64,
    pub sanity: SanityBox,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            num_rollouts: 1000,
            sub_rollouts: 1,
            horizon_steps: 50,
            iterations_per_step: 2,
            temperature: 0.01,
            exploration_std: [2.0, 2.0, 1.0, 0.03],
            rng_seed: 0,
            cost_ceiling: 1e8,
            sanity: SanityBox::default(),
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_rollouts == 0 {
            problems.push("num_rollouts must be >= 1".to_string());
        }
        if self.sub_rollouts == 0 {
            problems.push("sub_rollouts must be >= 1".to_string());
        }
        if self.horizon_steps == 0 {
            problems.push("horizon_steps must be >= 1".to_string());
        }
        if !(self.temperature > 0.0) {
            problems.push(format!("temperature must be > 0, got {}", self.temperature));
        }
        if self.exploration_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            problems.push(format!("exploration_std must be > 0, got {:?}", self.exploration_std));
        }
        if !(self.cost_ceiling > 0.0) {
            problems.push("cost_ceiling must be > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Optimization iterations per control cycle used for each model setting:
/// two for the analytic model and for one or four sub-rollouts, one for
/// larger sub-rollout counts.
pub fn default_iterations(learned: bool, sub_rollouts: usize) -> usize {
    if !learned || sub_rollouts <= 4 {
        2
    } else {
        1
    }
}

/// Default rollout count for a sub-rollout setting.
pub fn default_rollouts(sub_rollouts: usize) -> usize {
    match sub_rollouts {
        m if m >= 32 => 950,
        m if m >= 16 => 970,
        _ => 1000,
    }
}

/// Cost model the planner minimizes.
pub trait Objective: Sync {
    /// Instantaneous cost `q` of a state; `crashed` is the crash indicator
    /// for that state.
    fn stage_cost(&self, state: &QuadState, crashed: bool) -> f64;

    fn is_crash(&self, state: &QuadState) -> bool;
}

/// Position of a draw inside the receding-horizon loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleIndex {
    pub cycle: u64,
    pub iteration: u64,
}

/// Control perturbations, `rollouts × steps` entries of
/// (roll rate, pitch rate, yaw rate, thrust).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseArray {
    pub rollouts: usize,
    pub steps: usize,
    pub data: Vec<[f64; 4]>,
}

impl NoiseArray {
    pub fn zeros(rollouts: usize, steps: usize) -> Self {
        Self { rollouts, steps, data: vec![[0.0; 4]; rollouts * steps] }
    }

    #[inline]
    pub fn get(&self, rollout: usize, step: usize) -> &[f64; 4] {
        &self.data[rollout * self.steps + step]
    }

    pub fn rollout(&self, rollout: usize) -> &[[f64; 4]] {
        &self.data[rollout * self.steps..(rollout + 1) * self.steps]
    }
}

pub fn sample_noise(config: &PiConfig, index: SampleIndex) -> NoiseArray {
    let (k, n) = (config.num_rollouts, config.horizon_steps);
    let mut data = Vec::with_capacity(k * n);
    for rollout in 0..k {
        let mut rng = StreamKey {
            seed: config.rng_seed,
            purpose: Purpose::ControlNoise,
            cycle: index.cycle,
            iteration: index.iteration,
            rollout: rollout as u32,
            sub_rollout: 0,
        }
        .rng();
        for _ in 0..n {
            let mut e = [0.0; 4];
            for (c, std) in e.iter_mut().zip(&config.exploration_std) {
                *c = std * rng.sample::<f64, _>(StandardNormal);
            }
            data.push(e);
        }
    }
    NoiseArray { rollouts: k, steps: n, data }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub noise: NoiseArray,
    /// Row-major `rollouts × steps` cost-to-go, averaged over sub-rollouts.
    pub costs_to_go: Vec<f64>,
    /// Whether any sub-rollout of the rollout met the crash predicate.
    pub crash_flags: Vec<bool>,
    /// Whether any sub-rollout left the sanity box or hit the cost ceiling.
    pub diverged: Vec<bool>,
}

impl RolloutBatch {
    #[inline]
    pub fn cost(&self, rollout: usize, step: usize) -> f64 {
        self.costs_to_go[rollout * self.noise.steps + step]
    }

    pub fn column(&self, step: usize) -> Vec<f64> {
        (0..self.noise.rollouts).map(|k| self.cost(k, step)).collect()
    }
}

struct RolloutOutcome {
    costs_to_go: Vec<f64>,
    crashed: bool,
    diverged: bool,
}

/// Mean of `values` written as `first + Σ (v - first) / n`, which returns
/// `first` exactly when all values agree.
fn stable_mean(values: impl Iterator<Item = f64>, first: f64, n: usize) -> f64 {
    let inv = 1.0 / n as f64;
    first + values.map(|v| (v - first) * inv).sum::<f64>()
}

#[allow(clippy::too_many_arguments)]
fn evaluate_one<M: AccelModel + ?Sized, O: Objective + ?Sized>(
    state: &QuadState,
    plan: &ControlPlan,
    eps: &[[f64; 4]],
    model: &M,
    objective: &O,
    config: &PiConfig,
    params: &QuadParams,
    index: SampleIndex,
    rollout: usize,
) -> Result<RolloutOutcome> {
    let n = plan.len();
    let dt = params.dt;

    // The attitude trajectory and the acceleration distribution along it
    // depend only on the perturbed controls, so they are shared by all
    // sub-rollouts.
    let mut angles_after = Vec::with_capacity(n);
    let mut dists: Vec<AccelDist> = Vec::with_capacity(n);
    let (mut angles, mut rates) = (state.angles, state.rates);
    for (u, e) in plan.controls.iter().zip(eps) {
        let mut v = u.as_array();
        for c in 0..4 {
            v[c] += e[c];
        }
        let perturbed = Control::from_array(v).clamped(params);
        dists.push(model.accel(&angles, perturbed.thrust)?);
        let next = advance_attitude(&angles, &rates, &perturbed, params);
        angles = next.0;
        rates = next.1;
        angles_after.push((angles, rates));
    }

    let subs = config.sub_rollouts;
    let sample = subs > 1;
    let mut crashed_any = false;
    let mut diverged_any = false;
    let mut per_sub: Vec<Vec<f64>> = Vec::with_capacity(subs);

    for m in 0..subs {
        let mut rng = sample.then(|| {
            StreamKey {
                seed: config.rng_seed,
                purpose: Purpose::DynamicsNoise,
                cycle: index.cycle,
                iteration: index.iteration,
                rollout: rollout as u32,
                sub_rollout: m as u32,
            }
            .rng()
        });
        let mut s = *state;
        let mut crashed = false;
        let mut stage = vec![0.0; n];
        for i in 0..n {
            let accel: Vec3 = match rng.as_mut() {
                Some(r) => {
                    let z = [
                        r.sample::<f64, _>(StandardNormal),
                        r.sample::<f64, _>(StandardNormal),
                        r.sample::<f64, _>(StandardNormal),
                    ];
                    model.draw(&dists[i], &z)
                }
                None => dists[i].mean,
            };
            let (p, v) = advance_translation(&s.position, &s.velocity, &accel, dt);
            s = QuadState { position: p, velocity: v, angles: angles_after[i].0, rates: angles_after[i].1 };
            if !config.sanity.contains(&s) {
                diverged_any = true;
            }
            crashed = crashed || objective.is_crash(&s);
            let mut q = objective.stage_cost(&s, crashed) * dt;
            if !q.is_finite() || q > config.cost_ceiling {
                q = config.cost_ceiling;
                diverged_any = true;
            }
            stage[i] = q;
        }
        crashed_any |= crashed;
        // cost-to-go by reverse accumulation
        let mut acc = 0.0;
        for i in (0..n).rev() {
            acc += stage[i];
            stage[i] = acc.min(config.cost_ceiling);
        }
        per_sub.push(stage);
    }

    let costs_to_go = (0..n).map(|i| stable_mean(per_sub.iter().map(|s| s[i]), per_sub[0][i], subs)).collect();
    Ok(RolloutOutcome { costs_to_go, crashed: crashed_any, diverged: diverged_any })
}

/// Rolls out every perturbed plan and returns sub-rollout-averaged
/// costs-to-go. With one sub-rollout the mean prediction is used; with more,
/// each sub-rollout samples the model's acceleration distribution from its
/// own counter-addressed stream.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_rollouts<M: AccelModel + ?Sized, O: Objective + ?Sized>(
    state: &QuadState,
    plan: &ControlPlan,
    noise: NoiseArray,
    model: &M,
    objective: &O,
    config: &PiConfig,
    params: &QuadParams,
    index: SampleIndex,
) -> Result<RolloutBatch> {
    if plan.len() != noise.steps {
        return Err(Error::DimensionMismatch { expected: plan.len(), actual: noise.steps });
    }
    let eval = |k: usize| evaluate_one(state, plan, noise.rollout(k), model, objective, config, params, index, k);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<RolloutOutcome> = (0..noise.rollouts).into_par_iter().map(eval).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<RolloutOutcome> = (0..noise.rollouts).map(eval).collect::<Result<_>>()?;

    let mut costs_to_go = Vec::with_capacity(noise.rollouts * noise.steps);
    let mut crash_flags = Vec::with_capacity(noise.rollouts);
    let mut diverged = Vec::with_capacity(noise.rollouts);
    for o in outcomes {
        costs_to_go.extend(o.costs_to_go);
        crash_flags.push(o.crashed);
        diverged.push(o.diverged);
    }
    Ok(RolloutBatch { noise, costs_to_go, crash_flags, diverged })
}

/// Normalized path weights `exp(-(S_k - min S) / λ)` for one timestep.
pub fn softmax_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let sum: f64 = w.iter().sum();
    assert!(sum >= 1.0, "the minimum-cost rollout always has weight 1");
    for v in &mut w {
        *v /= sum;
    }
    w
}

pub fn path_integral_update(
    plan: &ControlPlan,
    batch: &RolloutBatch,
    temperature: f64,
    params: &QuadParams,
) -> Result<ControlPlan> {
    let (k, n) = (batch.noise.rollouts, batch.noise.steps);
    if n != plan.len() || batch.costs_to_go.len() != k * n {
        return Err(Error::DimensionMismatch { expected: plan.len(), actual: n });
    }
    let mut controls = Vec::with_capacity(n);
    for (i, u) in plan.controls.iter().enumerate() {
        let w = softmax_weights(&batch.column(i), temperature);
        let mut v = u.as_array();
        let mut delta = [0.0; 4];
        for (r, wr) in w.iter().enumerate() {
            let e = batch.noise.get(r, i);
            for c in 0..4 {
                delta[c] += wr * e[c];
            }
        }
        for c in 0..4 {
            v[c] += delta[c];
        }
        controls.push(Control::from_array(v).clamped(params));
    }
    Ok(ControlPlan { controls, dt: plan.dt, origin_time: plan.origin_time })
}

/// Runs `iterations_per_step` rounds of sample, evaluate, update.
pub fn optimize<M: AccelModel + ?Sized, O: Objective + ?Sized>(
    state: &QuadState,
    plan: &ControlPlan,
    config: &PiConfig,
    model: &M,
    objective: &O,
    params: &QuadParams,
    cycle: u64,
) -> Result<ControlPlan> {
    config.validate()?;
    if plan.len() != config.horizon_steps {
        return Err(Error::DimensionMismatch { expected: config.horizon_steps, actual: plan.len() });
    }
    let mut plan = plan.clone();
    for iteration in 0..config.iterations_per_step {
        let index = SampleIndex { cycle, iteration: iteration as u64 };
        let noise = sample_noise(config, index);
        let batch = evaluate_rollouts(state, &plan, noise, model, objective, config, params, index)?;
        plan = path_integral_update(&plan, &batch, config.temperature, params)?;
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecedingStep {
    /// First control of the optimized plan, to be executed now.
    pub control: Control,
    /// Warm start for the next cycle.
    pub carried: ControlPlan,
    pub optimized: ControlPlan,
}

pub fn receding_horizon_step<M: AccelModel + ?Sized, O: Objective + ?Sized>(
    state: &QuadState,
    plan: &ControlPlan,
    config: &PiConfig,
    model: &M,
    objective: &O,
    params: &QuadParams,
    cycle: u64,
) -> Result<RecedingStep> {
    let optimized = optimize(state, plan, config, model, objective, params, cycle)?;
    Ok(RecedingStep { control: optimized.controls[0], carried: optimized.shifted(), optimized })
}

/// Cost-to-go from the first step of `plan` under the model's mean
/// prediction.
pub fn plan_cost<M: AccelModel + ?Sized, O: Objective + ?Sized>(
    state: &QuadState,
    plan: &ControlPlan,
    model: &M,
    objective: &O,
    config: &PiConfig,
    params: &QuadParams,
) -> Result<f64> {
    let mean_only = PiConfig { sub_rollouts: 1, num_rollouts: 1, ..config.clone() };
    let noise = NoiseArray::zeros(1, plan.len());
    let batch = evaluate_rollouts(state, plan, noise, model, objective, &mean_only, params, SampleIndex::default())?;
    Ok(batch.cost(0, 0))
}
