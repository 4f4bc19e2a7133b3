use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhpi::dynamics::*;
use rhpi::lwpr::{LwprConfig, LwprModel, ReceptiveField};

type Mat = [[f64; 3]; 3];

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

/// Third column of Rz(ψ) Ry(θ) Rx(φ), built from the elementary matrices.
fn body_z(angles: &Vec3) -> Vec3 {
    let [r, p, y] = *angles;
    let rx = [[1.0, 0.0, 0.0], [0.0, r.cos(), -r.sin()], [0.0, r.sin(), r.cos()]];
    let ry = [[p.cos(), 0.0, p.sin()], [0.0, 1.0, 0.0], [-p.sin(), 0.0, p.cos()]];
    let rz = [[y.cos(), -y.sin(), 0.0], [y.sin(), y.cos(), 0.0], [0.0, 0.0, 1.0]];
    let m = matmul(&rz, &matmul(&ry, &rx));
    [m[0][2], m[1][2], m[2][2]]
}

#[test]
fn accel_matches_rotation_matrices() {
    let params = QuadParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let angles = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)];
        let thrust = rng.random_range(0.0..params.max_thrust);
        let state = QuadState { angles, ..QuadState::default() };
        let a = accel_analytic(&state, &Control::new([0.0; 3], thrust, &params), &params);
        let z = body_z(&angles);
        for i in 0..3 {
            let expect = thrust / params.mass * z[i] - if i == 2 { params.gravity } else { 0.0 };
            assert!((a[i] - expect).abs() < 1e-12, "{a:?}");
        }
    }
    let pitched = QuadState { angles: [0.0, 0.1, 0.0], ..QuadState::default() };
    let a = accel_analytic(&pitched, &Control::hover(&params), &params);
    assert!((a[0] - params.gravity * 0.1f64.sin()).abs() < 1e-12);
}

#[test]
fn single_euler_steps_by_hand() {
    let params = QuadParams::default();
    let fall = step_analytic(&QuadState::default(), &Control::new([0.0; 3], 0.0, &params), &params);
    assert!((fall.velocity[2] + 0.1962).abs() < 1e-12);
    assert_eq!(fall.position, [0.0; 3]);

    let spin =
        step_analytic(&QuadState::default(), &Control::new([1.0, 0.0, 0.0], params.hover_thrust(), &params), &params);
    assert!((spin.rates[0] - 0.5).abs() < 1e-12);
    assert_eq!(spin.angles, [0.0; 3]);

    let moving = QuadState { velocity: [1.0, -2.0, 0.5], ..QuadState::at([0.0, 0.0, 1.0]) };
    let next = step_analytic(&moving, &Control::hover(&params), &params);
    assert!((next.position[0] - 0.02).abs() < 1e-15 && (next.position[1] + 0.04).abs() < 1e-15);
    assert_eq!(next.velocity, moving.velocity);
}

fn zero_variance_hybrid() -> HybridModel {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let axis = |rng: &mut ChaCha8Rng| {
        // a single field per axis: with several, their disagreement adds variance
        let center: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
        let metric: Vec<f64> = (0..16).map(|k| if k % 5 == 0 { 4.0 } else { 0.0 }).collect();
        let coefficients: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fields = vec![ReceptiveField::new(center, metric, coefficients, 0.0).unwrap()];
        LwprModel::from_fields(4, LwprConfig::with_widths(&[0.5; 4]), fields).unwrap()
    };
    HybridModel::from_axes([axis(&mut rng), axis(&mut rng), axis(&mut rng)])
}

#[test]
fn sample_mode_without_spread_equals_mean_mode() {
    let params = QuadParams::default();
    let hybrid = zero_variance_hybrid();
    let state = QuadState { angles: [0.05, -0.1, 0.2], velocity: [0.3, 0.0, -0.1], ..QuadState::at([0.0, 0.0, 1.0]) };
    let u = Control::new([0.2, 0.1, 0.0], 0.17, &params);
    let mean = step_learned(&state, &u, &params, &hybrid, StepMode::Mean).unwrap();
    for noise in [[0.0; 3], [1.5, -2.0, 0.3], [-3.0, 3.0, 9.0]] {
        let sampled = step_learned(&state, &u, &params, &hybrid, StepMode::Sample(noise)).unwrap();
        assert_eq!(sampled, mean);
    }
}

#[test]
fn sample_mode_with_zero_noise_equals_mean_mode() {
    let params = QuadParams::default();
    let hybrid = HybridModel::fit_analytic_grid(&params, HybridModel::default_config(), 0.3, 1).unwrap();
    let state = QuadState { angles: [0.05, -0.1, 0.2], ..QuadState::at([0.0, 0.0, 1.0]) };
    let u = Control::new([0.2, 0.1, 0.0], 0.17, &params);
    let mean = step_learned(&state, &u, &params, &hybrid, StepMode::Mean).unwrap();
    let sampled = step_learned(&state, &u, &params, &hybrid, StepMode::Sample([0.0; 3])).unwrap();
    assert_eq!(mean, sampled);
}

#[test]
fn untrained_hybrid_is_an_error() {
    let params = QuadParams::default();
    let hybrid = HybridModel::new(HybridModel::default_config()).unwrap();
    let r = step_learned(&QuadState::default(), &Control::hover(&params), &params, &hybrid, StepMode::Mean);
    assert!(matches!(r, Err(rhpi::Error::UntrainedModel(_))));
}

#[test]
fn grid_fitted_hybrid_tracks_the_analytic_step() {
    let params = QuadParams::default();
    let hybrid = HybridModel::fit_analytic_grid(&params, HybridModel::default_config(), 0.3, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let state = QuadState {
            angles: [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)],
            velocity: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            ..QuadState::at([0.0, 0.0, 1.0])
        };
        let hover = params.hover_thrust();
        let u = Control::new([0.0; 3], rng.random_range(0.8 * hover..1.2 * hover), &params);
        let a = step_analytic(&state, &u, &params);
        let l = step_learned(&state, &u, &params, &hybrid, StepMode::Mean).unwrap();
        for i in 0..3 {
            worst = worst.max((a.velocity[i] - l.velocity[i]).abs() / params.dt);
        }
        assert_eq!(a.position, l.position);
    }
    // acceleration error implied by one step, in m/s²
    assert!(worst < 0.5, "worst acceleration error {worst}");
}

#[test]
fn propagation_edge_cases() {
    let params = QuadParams::default();
    let model = AnalyticModel { params };
    let start = QuadState::at([0.3, -0.2, 1.0]);
    let plan = vec![Control::hover(&params); 50];
    let sanity = SanityBox::default();

    let empty = propagate(&model, &start, &plan, 0, &params, None, &sanity).unwrap();
    assert_eq!(empty.states, vec![start]);

    let hover = propagate(&model, &start, &plan, 50, &params, None, &sanity).unwrap();
    assert_eq!(hover.states.len(), 51);
    assert!(!hover.diverged);
    for s in &hover.states {
        for i in 0..3 {
            assert!((s.position[i] - start.position[i]).abs() < 1e-9);
            assert!(s.velocity[i].abs() < 1e-9);
        }
    }

    assert!(propagate(&model, &start, &plan, 51, &params, None, &sanity).is_err());

    let tight = SanityBox { max_abs_position: 1.0, max_abs_velocity: 100.0 };
    let fall = vec![Control::new([0.0; 3], 0.0, &params); 50];
    let p = propagate(&model, &start, &fall, 50, &params, None, &tight).unwrap();
    assert!(p.diverged);
    assert_eq!(p.states.len(), 51);
}

#[test]
fn ground_truth_reduces_to_analytic_when_ideal() {
    let params = QuadParams::default();
    let truth = GroundTruth::ideal(params);
    let state = QuadState { angles: [0.1, -0.05, 0.3], velocity: [0.4, 0.1, -0.2], ..QuadState::at([0.0, 0.0, 1.0]) };
    let u = Control::new([0.3, 0.0, -0.1], 0.2, &params);
    assert_eq!(truth.step(&state, &u), step_analytic(&state, &u, &params));

    let dragged = GroundTruth { drag: 0.5, ..truth };
    let a = dragged.accel(&state, &u);
    let b = accel_analytic(&state, &u, &params);
    for i in 0..3 {
        assert!((a[i] - (b[i] - 0.5 * state.velocity[i])).abs() < 1e-12);
    }
}
