mod common;

use common::{mean_std, two_point_expectation, Beyond, TwoPointModel};
use rhpi::controller::*;
use rhpi::dynamics::{AnalyticModel, GroundTruth, QuadParams, QuadState, Vec3};

/// Squared distance to a target plus a small velocity penalty.
struct Quadratic {
    target: Vec3,
}

impl Objective for Quadratic {
    fn stage_cost(&self, s: &QuadState, _: bool) -> f64 {
        let d: f64 = (0..3).map(|i| (s.position[i] - self.target[i]).powi(2)).sum();
        d + 0.1 * s.velocity.iter().map(|v| v * v).sum::<f64>()
    }

    fn is_crash(&self, _: &QuadState) -> bool {
        false
    }
}

fn two_point_costs(m: usize, rollouts: usize, steps: usize) -> Vec<f64> {
    let params = QuadParams::default();
    let model = TwoPointModel { step: 1.0 };
    let objective = Beyond { threshold: 0.5 * params.dt * params.dt };
    let config =
        PiConfig { num_rollouts: rollouts, sub_rollouts: m, horizon_steps: steps, rng_seed: 11, ..PiConfig::default() };
    let plan = ControlPlan::hover(steps, &params);
    let batch = evaluate_rollouts(
        &QuadState::default(),
        &plan,
        NoiseArray::zeros(rollouts, steps),
        &model,
        &objective,
        &config,
        &params,
        SampleIndex::default(),
    )
    .unwrap();
    batch.column(0)
}

#[test]
fn sub_rollout_average_matches_enumerated_expectation() {
    let steps = 12;
    let (expect, var) = two_point_expectation(steps, QuadParams::default().dt);
    assert!(var > 0.0);
    for m in [4, 16, 64] {
        let costs = two_point_costs(m, 4000, steps);
        let (mean, std) = mean_std(&costs);
        let se = (var / m as f64 / costs.len() as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * se, "M={m}: {mean} vs {expect} (se {se})");
        // spread of the M-averaged cost follows the single-sample variance / M
        let predicted = (var / m as f64).sqrt();
        assert!((std / predicted - 1.0).abs() < 0.1, "M={m}: std {std} vs {predicted}");
    }
}

#[test]
fn single_rollout_update_adds_its_noise() {
    let params = QuadParams::default();
    let plan = ControlPlan::hover(3, &params);
    let noise = NoiseArray { rollouts: 1, steps: 3, data: vec![[0.1, -0.2, 0.3, 0.01]; 3] };
    let batch =
        RolloutBatch { noise, costs_to_go: vec![3.0, 2.0, 1.0], crash_flags: vec![false], diverged: vec![false] };
    let updated = path_integral_update(&plan, &batch, 0.5, &params).unwrap();
    for u in &updated.controls {
        assert_eq!(u.desired_rates, [0.1, -0.2, 0.3]);
        assert!((u.thrust - params.hover_thrust() - 0.01).abs() < 1e-15);
    }
}

#[test]
fn optimization_lowers_expected_rollout_cost() {
    let params = QuadParams::default();
    let model = AnalyticModel { params };
    let objective = Quadratic { target: [1.0, 0.0, 1.0] };
    let state = QuadState::at([0.0, 0.0, 1.0]);
    let plan = ControlPlan::hover(50, &params);
    let mut improved = 0;
    for seed in 0..20 {
        let config = PiConfig { num_rollouts: 200, rng_seed: seed, ..PiConfig::default() };
        let expected_cost = |p: &ControlPlan| {
            let index = SampleIndex { cycle: 99, iteration: 0 };
            let noise = sample_noise(&config, index);
            let b = evaluate_rollouts(&state, p, noise, &model, &objective, &config, &params, index).unwrap();
            b.column(0).iter().sum::<f64>() / config.num_rollouts as f64
        };
        let after = optimize(&state, &plan, &config, &model, &objective, &params, 0).unwrap();
        if expected_cost(&after) <= expected_cost(&plan) {
            improved += 1;
        }
    }
    assert!(improved >= 18, "improved on {improved} of 20 seeds");
}

#[test]
fn closed_loop_hover_regulation() {
    let params = QuadParams::default();
    let model = AnalyticModel { params };
    let truth = GroundTruth::ideal(params);
    let target = [0.0, 0.0, 1.0];
    let objective = Quadratic { target };
    for seed in 0..10 {
        let config = PiConfig { rng_seed: seed, ..PiConfig::default() };
        let mut state = QuadState::at([0.3, 0.0, 1.0]);
        let mut plan = ControlPlan::hover(config.horizon_steps, &params);
        let steps = (3.0 / params.dt).round() as u64;
        for cycle in 0..steps {
            let step = receding_horizon_step(&state, &plan, &config, &model, &objective, &params, cycle).unwrap();
            state = truth.step(&state, &step.control);
            plan = step.carried;
        }
        let err: f64 = (0..3).map(|i| (state.position[i] - target[i]).powi(2)).sum::<f64>().sqrt();
        assert!(err < 0.1, "seed {seed}: error {err} after 3 s");
    }
}

#[test]
fn cost_shift_leaves_weights_unchanged() {
    let costs = [3.0, 1.5, 7.25, 1.5, 40.0];
    let shifted: Vec<f64> = costs.iter().map(|c| c + 1234.5).collect();
    let a = softmax_weights(&costs, 0.7);
    let b = softmax_weights(&shifted, 0.7);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in a.iter().zip(common::reference_weights(&costs, 0.7)) {
        assert!((x - y).abs() < 1e-15);
    }
}
