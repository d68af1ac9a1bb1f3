use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

use super::*;

fn builtin(id: PlantId) -> PlantSpec {
    PlantCatalog::builtin().get(id).unwrap().clone()
}

fn sine_input(n: usize, amp: f64, freq: f64, fs: f64) -> DVector<f64> {
    DVector::from_fn(n, |k, _| amp * (2.0 * std::f64::consts::PI * freq * k as f64 / fs).sin())
}

#[test]
fn rk4_single_step_of_exponential_decay() {
    let x = DVector::from_vec(vec![1.0]);
    let next = rk4_step(|s, _| -s.clone(), &x, 0.0, 0.02).unwrap();
    assert_relative_eq!(next[0], 0.980_198_673_3, epsilon = 1e-9);
    assert!(rk4_step(|s, _| -s.clone(), &x, 0.0, 0.0).is_err());
    let integ = rk4_step(|s, v| DVector::from_element(s.len(), v), &x, 1.0, 0.02).unwrap();
    assert_relative_eq!(integ[0], 1.02, epsilon = 1e-15);
}

#[test]
fn rk4_preserves_equilibrium() {
    for id in [PlantId::Cube, PlantId::Pendu, PlantId::Twipr] {
        let spec = builtin(id);
        let x = DVector::zeros(spec.state_dim());
        let next = rk4_step(|s, v| plant_dynamics(&spec.physics, s, v), &x, 0.0, 0.002).unwrap();
        assert_eq!(next, x, "{id}");
    }
}

#[test]
fn zero_input_keeps_plants_at_rest() {
    for id in [PlantId::Cube, PlantId::Pendu, PlantId::Twipr, PlantId::Linear] {
        let spec = builtin(id);
        let sim = run_trial(&spec, &DVector::zeros(100), 0, false).unwrap();
        assert_eq!(sim.record.output.amax(), 0.0, "{id}");
    }
}

#[test]
fn linear_plant_matches_lifted_matrix() {
    let spec = builtin(PlantId::Linear);
    let u = sine_input(100, 0.3, 1.3, spec.fs) + DVector::from_fn(100, |k, _| 0.05 * ((k * 7 % 11) as f64 - 5.0));
    let sim = run_trial(&spec, &u, 0, false).unwrap();
    let p = lifted_matrix_linear(&spec, 100).unwrap();
    assert!((&p * &u - &sim.record.output).amax() <= 1e-10);
    assert_eq!(sim.record.output, sim.clean_output);
}

#[test]
fn lifted_matrix_of_scalar_system() {
    let mut spec = builtin(PlantId::Linear);
    // x' = -x + u sampled at 1 Hz: a_d = e^-1, b_d = 1 - e^-1
    spec.physics = Physics::Linear {
        a: vec![vec![-1.0]],
        b: vec![1.0],
    };
    spec.output_row = vec![1.0];
    spec.fs = 1.0;
    let p = lifted_matrix_linear(&spec, 3).unwrap();
    let ad = (-1.0f64).exp();
    let bd = 1.0 - ad;
    let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, bd, 0.0, 0.0, ad * bd, bd, 0.0]);
    assert!((p - expected).amax() <= 1e-14);
}

#[test]
fn runs_are_deterministic_per_seed() {
    let spec = builtin(PlantId::Pendu);
    let u = sine_input(100, 0.05, 0.8, spec.fs);
    let a = run_trial(&spec, &u, 42, true).unwrap();
    let b = run_trial(&spec, &u, 42, true).unwrap();
    let c = run_trial(&spec, &u, 43, true).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.record.output, c.record.output);
    assert_eq!(a.clean_output, c.clean_output);
}

#[test]
fn noise_matches_configured_level() {
    let spec = builtin(PlantId::Linear);
    let sim = run_trial(&spec, &DVector::zeros(2000), 5, true).unwrap();
    let std = (sim.record.output.map(|v| v * v).sum() / 2000.0).sqrt();
    assert_relative_eq!(std, spec.output_noise_std, max_relative = 0.1);
}

#[test]
fn double_pendulum_conserves_energy_without_damping() {
    let mut spec = builtin(PlantId::Pendu);
    if let Physics::DoublePendulum {
        damping1, damping2, ..
    } = &mut spec.physics
    {
        *damping1 = 0.0;
        *damping2 = 0.0;
    }
    let x0 = DVector::from_vec(vec![0.6, 0.0, -0.4, 0.0]);
    let sim = run_trial_from(&spec, &DVector::zeros(100), &x0, 0, false).unwrap();
    let states = sim.record.state.unwrap();
    let e0 = spec.physics.energy(&x0).unwrap();
    for k in 0..100 {
        let e = spec.physics.energy(&states.column(k).into_owned()).unwrap();
        assert!((e - e0).abs() <= 1e-3 * e0.abs(), "sample {k}: {e} vs {e0}");
    }
}

#[test]
fn reaction_wheel_derivative_at_horizontal() {
    let spec = builtin(PlantId::Cube);
    let Physics::ReactionWheelPendulum {
        mass,
        com_distance,
        body_inertia,
        wheel_inertia,
        ..
    } = spec.physics
    else {
        panic!("unexpected physics");
    };
    let x = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0]);
    let dx = plant_dynamics(&spec.physics, &x, 0.0);
    assert_relative_eq!(dx[1], -mass * 9.81 * com_distance / (body_inertia + wheel_inertia), max_relative = 1e-12);
    assert_eq!(dx[2], 0.0);
    let dx = plant_dynamics(&spec.physics, &DVector::zeros(3), 0.01);
    assert_relative_eq!(dx[2], 0.01 / wheel_inertia, max_relative = 1e-12);
}

#[test]
fn wheeled_pendulum_needs_feedback() {
    let spec = builtin(PlantId::Twipr);
    let x0 = DVector::from_vec(vec![0.01, 0.0, 0.0, 0.0]);
    let mut open = spec.clone();
    open.feedback_gain = None;
    open.input_bounds = None;
    open.divergence_bound = 1.0;
    assert!(matches!(
        run_trial_from(&open, &DVector::zeros(100), &x0, 0, false),
        Err(Error::Divergence { .. })
    ));
    let closed = run_trial_from(&spec, &DVector::zeros(100), &x0, 0, false).unwrap();
    let tilt = closed.record.state.unwrap().row(0).into_owned();
    assert!(tilt[99].abs() < 1e-3, "final tilt {}", tilt[99]);
}

#[test]
fn stored_feedback_gain_is_the_lqr_gain() {
    let spec = builtin(PlantId::Twipr);
    let (a, b) = linearize_at_rest(&spec.physics);
    let (ad, bd) = zoh_discretize(&a, &b, spec.sample_period());
    let k = discrete_lqr(&ad, &bd, &DMatrix::identity(4, 4), 1.0).unwrap();
    let stored = spec.feedback_gain.as_ref().unwrap();
    for (s, c) in stored.iter().zip(k.iter()) {
        assert!((s - c).abs() <= 1e-6 * c.abs().max(1.0), "stored {stored:?} computed {k:?}");
    }
}

#[test]
fn divergence_reports_sample() {
    let mut spec = builtin(PlantId::Linear);
    spec.physics = Physics::Linear {
        a: vec![vec![50.0]],
        b: vec![1.0],
    };
    spec.output_row = vec![1.0];
    let mut u = DVector::zeros(50);
    u[0] = 1.0;
    match run_trial(&spec, &u, 0, false) {
        Err(Error::Divergence { sample, .. }) => assert!(sample > 2 && sample <= 50),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn input_bounds_clip_total_actuation() {
    let spec = builtin(PlantId::Cube);
    let [lo, hi] = spec.input_bounds.unwrap();
    let u = DVector::from_fn(50, |k, _| if k % 2 == 0 { 10.0 } else { -10.0 });
    let sim = run_trial(&spec, &u, 0, false).unwrap();
    assert!(sim.applied_input.iter().all(|v| *v >= lo && *v <= hi));
    assert_eq!(sim.record.input, u);
}

#[test]
fn catalog_round_trips_bit_exactly() {
    let catalog = PlantCatalog::builtin();
    let text = catalog.to_json();
    let back = PlantCatalog::from_json(&text).unwrap();
    assert_eq!(back, catalog);
    assert_eq!(back.to_json(), text);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plants.json");
    catalog.save(&path).unwrap();
    assert_eq!(PlantCatalog::load(&path).unwrap(), catalog);
}

#[test]
fn catalog_load_distinguishes_missing_and_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    assert!(matches!(PlantCatalog::load(&missing), Err(Error::NotFound(_))));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"CUBE\": {\n    \"id\": \"CUBE\",\n").unwrap();
    match PlantCatalog::load(&bad) {
        Err(Error::Parse { path, line, .. }) => {
            assert_eq!(path, bad);
            assert!(line >= 3);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn plant_ids_parse_case_insensitively() {
    assert_eq!("twipr".parse::<PlantId>().unwrap(), PlantId::Twipr);
    assert!(matches!("ROBOT".parse::<PlantId>(), Err(Error::Config(_))));
}

