//! Quadrotor models: the analytic rigid-body model, the hybrid model whose
//! translational accelerations come from learned regressors, and a perturbed
//! "ground truth" simulator used to fly trials.
//!
//! All models share one explicit-Euler kinematic core. Attitude is driven
//! by commanded body rates through a first-order rate loop
//! `ṙ = k (r_desired - r)` and angles integrate the tracked rates directly.
//! Position is advanced with the pre-update velocity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lwpr::{predict_shared, LwprConfig, LwprModel};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadParams {
    pub mass: f64,
    pub gravity: f64,
    pub rate_gain: f64,
    pub max_thrust: f64,
    pub max_rate: f64,
    pub dt: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        let mass = 0.019;
        let gravity = 9.81;
        Self { mass, gravity, rate_gain: 25.0, max_thrust: 2.0 * mass * gravity, max_rate: 10.0, dt: 0.02 }
    }
}

impl QuadParams {
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mass > 0.0
            && self.dt > 0.0
            && self.rate_gain > 0.0
            && self.gravity.is_finite()
            && self.max_thrust > 0.0
            && self.max_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid quadrotor parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Roll, pitch, yaw in (-π, π].
    pub angles: Vec3,
    /// Actual Euler-angle rates.
    pub rates: Vec3,
}

impl QuadState {
    pub fn at(position: Vec3) -> Self {
        Self { position, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).chain(&self.angles).chain(&self.rates).all(|v| v.is_finite())
    }
}

/// Attitude-rate and collective-thrust command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub desired_rates: Vec3,
    pub thrust: f64,
}

impl Control {
    /// Builds a command saturated to the actuator limits in `params`.
    pub fn new(desired_rates: Vec3, thrust: f64, params: &QuadParams) -> Self {
        Self { desired_rates, thrust }.clamped(params)
    }

    pub fn hover(params: &QuadParams) -> Self {
        Self::new([0.0; 3], params.hover_thrust(), params)
    }

    pub fn clamped(self, params: &QuadParams) -> Self {
        let r = params.max_rate;
        Self {
            desired_rates: self.desired_rates.map(|v| v.clamp(-r, r)),
            thrust: self.thrust.clamp(0.0, params.max_thrust),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        let [p, q, r] = self.desired_rates;
        [p, q, r, self.thrust]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self { desired_rates: [v[0], v[1], v[2]], thrust: v[3] }
    }
}

/// Wraps an angle into (-π, π].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    a - 2.0 * PI * ((a - PI) / (2.0 * PI)).ceil()
}

/// World-frame direction of the body z axis under the Z-Y-X Euler rotation
/// `R = Rz(ψ) Ry(θ) Rx(φ)`.
#[inline]
pub fn thrust_direction(angles: &Vec3) -> Vec3 {
    let (sr, cr) = angles[0].sin_cos();
    let (sp, cp) = angles[1].sin_cos();
    let (sy, cy) = angles[2].sin_cos();
    [cr * sp * cy + sr * sy, cr * sp * sy - sr * cy, cr * cp]
}

#[inline]
fn analytic_accel_from(angles: &Vec3, thrust: f64, params: &QuadParams) -> Vec3 {
    let dir = thrust_direction(angles);
    let a = thrust / params.mass;
    [a * dir[0], a * dir[1], a * dir[2] - params.gravity]
}

/// Rigid-body translational acceleration for a state and command.
pub fn accel_analytic(state: &QuadState, control: &Control, params: &QuadParams) -> Vec3 {
    analytic_accel_from(&state.angles, control.thrust, params)
}

/// One Euler step of the rate loop and angle kinematics.
#[inline]
pub fn advance_attitude(angles: &Vec3, rates: &Vec3, control: &Control, params: &QuadParams) -> (Vec3, Vec3) {
    let dt = params.dt;
    let mut next_angles = [0.0; 3];
    let mut next_rates = [0.0; 3];
    for i in 0..3 {
        next_angles[i] = wrap_angle(angles[i] + rates[i] * dt);
        next_rates[i] = rates[i] + params.rate_gain * (control.desired_rates[i] - rates[i]) * dt;
    }
    (next_angles, next_rates)
}

/// One Euler step of position and velocity under a given acceleration.
#[inline]
pub fn advance_translation(position: &Vec3, velocity: &Vec3, accel: &Vec3, dt: f64) -> (Vec3, Vec3) {
    let mut p = [0.0; 3];
    let mut v = [0.0; 3];
    for i in 0..3 {
        p[i] = position[i] + velocity[i] * dt;
        v[i] = velocity[i] + accel[i] * dt;
    }
    (p, v)
}

/// Full Euler step given the translational acceleration at the current state.
pub fn integrate(state: &QuadState, control: &Control, accel: &Vec3, params: &QuadParams) -> QuadState {
    let (position, velocity) = advance_translation(&state.position, &state.velocity, accel, params.dt);
    let (angles, rates) = advance_attitude(&state.angles, &state.rates, control, params);
    QuadState { position, velocity, angles, rates }
}

pub fn step_analytic(state: &QuadState, control: &Control, params: &QuadParams) -> QuadState {
    integrate(state, control, &accel_analytic(state, control, params), params)
}

/// Per-axis acceleration mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccelDist {
    pub mean: Vec3,
    pub variance: Vec3,
}

impl AccelDist {
    pub fn deterministic(mean: Vec3) -> Self {
        Self { mean, variance: [0.0; 3] }
    }
}

/// A model of translational acceleration as a function of attitude and
/// thrust. Used by the planner for rollouts.
///
/// Both model families predict accelerations from `(φ, θ, ψ, F)` alone, so
/// along a rollout the predicted distribution depends only on the control
/// sequence and the initial attitude.
pub trait AccelModel: Sync {
    fn accel(&self, angles: &Vec3, thrust: f64) -> Result<AccelDist>;

    /// Draws one acceleration given per-axis standard-normal variates.
    #[inline]
    fn draw(&self, dist: &AccelDist, normals: &Vec3) -> Vec3 {
        let mut a = dist.mean;
        for i in 0..3 {
            a[i] += dist.variance[i].sqrt() * normals[i];
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticModel {
    pub params: QuadParams,
}

impl AccelModel for AnalyticModel {
    #[inline]
    fn accel(&self, angles: &Vec3, thrust: f64) -> Result<AccelDist> {
        Ok(AccelDist::deterministic(analytic_accel_from(angles, thrust, &self.params)))
    }
}

/// Three independent regressors for ẍ, ÿ, z̈ over inputs (φ, θ, ψ, F).
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    axes: [LwprModel; 3],
    /// All three axes have identical receptive fields, which holds whenever
    /// they were trained on the same inputs from the same configuration.
    shared_layout: bool,
}

pub const AXIS_NAMES: [&str; 3] = ["ax", "ay", "az"];

impl HybridModel {
    /// Empty models with the default receptive-field geometry.
    pub fn new(config: LwprConfig) -> Result<Self> {
        Ok(Self::from_axes([
            LwprModel::new(4, config.clone())?,
            LwprModel::new(4, config.clone())?,
            LwprModel::new(4, config)?,
        ]))
    }

    /// Wraps three per-axis models. Each must take the four inputs
    /// (roll, pitch, yaw, thrust).
    pub fn from_axes(axes: [LwprModel; 3]) -> Self {
        let shared_layout = axes[0].same_layout(&axes[1]) && axes[0].same_layout(&axes[2]);
        Self { axes, shared_layout }
    }

    pub fn axes(&self) -> &[LwprModel; 3] {
        &self.axes
    }

    /// Receptive-field geometry used for the learned quadrotor model:
    /// widths in radians for the three angles and newtons for thrust.
    pub fn default_config() -> LwprConfig {
        LwprConfig::with_widths(&[0.25, 0.25, 0.5, 0.06])
    }

    pub fn inputs(angles: &Vec3, thrust: f64) -> [f64; 4] {
        [angles[0], angles[1], angles[2], thrust]
    }

    pub fn update(&mut self, angles: &Vec3, thrust: f64, accel: &Vec3) -> Result<()> {
        let x = Self::inputs(angles, thrust);
        if x.iter().chain(accel).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("training sample"));
        }
        let before = self.field_counts();
        for (model, &target) in self.axes.iter_mut().zip(accel) {
            model.update(&x, target)?;
        }
        if self.shared_layout && self.field_counts() != before {
            let [a, b, c] = &self.axes;
            self.shared_layout = a.same_layout(b) && a.same_layout(c);
        }
        Ok(())
    }

    pub fn field_counts(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    /// A hybrid model fitted to the analytic accelerations on a regular grid
    /// of attitudes and thrusts. Deterministic.
    pub fn fit_analytic_grid(params: &QuadParams, config: LwprConfig, span: f64, passes: usize) -> Result<Self> {
        let mut model = Self::new(config)?;
        let n = 7;
        let lin = |i: usize, lo: f64, hi: f64| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let hover = params.hover_thrust();
        for _ in 0..passes {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let angles = [lin(a, -span, span), lin(b, -span, span), lin(c, -span, span)];
                            let thrust = lin(d, 0.6 * hover, 1.4 * hover);
                            let acc = analytic_accel_from(&angles, thrust, params);
                            model.update(&angles, thrust, &acc)?;
                        }
                    }
                }
            }
        }
        Ok(model)
    }
}

impl AccelModel for HybridModel {
    #[inline]
    fn accel(&self, angles: &Vec3, thrust: f64) -> Result<AccelDist> {
        let x = Self::inputs(angles, thrust);
        for (i, model) in self.axes.iter().enumerate() {
            if model.is_empty() {
                return Err(Error::UntrainedModel(AXIS_NAMES[i]));
            }
        }
        let [a, b, c] = &self.axes;
        let p = if self.shared_layout {
            predict_shared([a, b, c], &x)?
        } else {
            [a.predict(&x)?, b.predict(&x)?, c.predict(&x)?]
        };
        Ok(AccelDist {
            mean: [p[0].mean, p[1].mean, p[2].mean],
            variance: [p[0].variance, p[1].variance, p[2].variance],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    /// Use predicted means.
    Mean,
    /// Mean plus `sqrt(variance) * noise` per axis.
    Sample(Vec3),
}

pub fn step_learned(
    state: &QuadState,
    control: &Control,
    params: &QuadParams,
    hybrid: &HybridModel,
    mode: StepMode,
) -> Result<QuadState> {
    step_model(hybrid, state, control, params, mode)
}

/// Single step through any acceleration model.
pub fn step_model<M: AccelModel + ?Sized>(
    model: &M,
    state: &QuadState,
    control: &Control,
    params: &QuadParams,
    mode: StepMode,
) -> Result<QuadState> {
    let dist = model.accel(&state.angles, control.thrust)?;
    let accel = match mode {
        StepMode::Mean => dist.mean,
        StepMode::Sample(noise) => model.draw(&dist, &noise),
    };
    Ok(integrate(state, control, &accel, params))
}

/// Axis-aligned region outside of which propagation is flagged divergent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SanityBox {
    pub max_abs_position: f64,
    pub max_abs_velocity: f64,
}

impl Default for SanityBox {
    fn default() -> Self {
        Self { max_abs_position: 100.0, max_abs_velocity: 100.0 }
    }
}

impl SanityBox {
    pub fn contains(&self, s: &QuadState) -> bool {
        s.is_finite()
            && s.position.iter().all(|v| v.abs() <= self.max_abs_position)
            && s.velocity.iter().all(|v| v.abs() <= self.max_abs_velocity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Initial state followed by one state per step.
    pub states: Vec<QuadState>,
    pub diverged: bool,
}

/// Iterates single steps of `model` over the first `horizon` controls.
///
/// With `noise = Some(seq)` each step samples with `seq[i]`; otherwise the
/// mean prediction is used.
pub fn propagate<M: AccelModel + ?Sized>(
    model: &M,
    initial: &QuadState,
    controls: &[Control],
    horizon: usize,
    params: &QuadParams,
    noise: Option<&[Vec3]>,
    sanity: &SanityBox,
) -> Result<Propagation> {
    if horizon > controls.len() {
        return Err(Error::Config(format!("horizon {horizon} exceeds plan length {}", controls.len())));
    }
    if let Some(n) = noise {
        if n.len() < horizon {
            return Err(Error::DimensionMismatch { expected: horizon, actual: n.len() });
        }
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(*initial);
    let mut diverged = !sanity.contains(initial);
    let mut s = *initial;
    for (i, u) in controls[..horizon].iter().enumerate() {
        let mode = match noise {
            Some(n) => StepMode::Sample(n[i]),
            None => StepMode::Mean,
        };
        s = step_model(model, &s, u, params, mode)?;
        diverged |= !sanity.contains(&s);
        states.push(s);
    }
    Ok(Propagation { states, diverged })
}

/// The simulator standing in for the real vehicle: the analytic model with
/// linear drag, a thrust-scale bias and a fixed tilt offset of the thrust
/// axis (roll, pitch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub params: QuadParams,
    pub drag: f64,
    pub thrust_scale: f64,
    pub tilt_bias: [f64; 2],
}

impl GroundTruth {
    pub fn ideal(params: QuadParams) -> Self {
        Self { params, drag: 0.0, thrust_scale: 1.0, tilt_bias: [0.0; 2] }
    }

    pub fn accel(&self, state: &QuadState, control: &Control) -> Vec3 {
        let angles = [state.angles[0] + self.tilt_bias[0], state.angles[1] + self.tilt_bias[1], state.angles[2]];
        let mut a = analytic_accel_from(&angles, control.thrust * self.thrust_scale, &self.params);
        for i in 0..3 {
            a[i] -= self.drag * state.velocity[i];
        }
        a
    }

    pub fn step(&self, state: &QuadState, control: &Control) -> QuadState {
        integrate(state, control, &self.accel(state, control), &self.params)
    }
}
