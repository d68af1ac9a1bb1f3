use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::plant::{run_trial, PlantCatalog};
use crate::seed::rng_from_seed;

fn sine(n: usize, freq: f64, amp: f64, fs: f64) -> DVector<f64> {
    DVector::from_fn(n, |k, _| amp * (2.0 * PI * freq * k as f64 / fs).sin())
}

fn white(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = rng_from_seed(seed);
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn linear_plant() -> PlantSpec {
    PlantCatalog::builtin().get(PlantId::Linear).unwrap().clone()
}

#[test]
fn error_trajectory_basics() {
    let r = DVector::from_vec(vec![1.0, 2.0]);
    let y = DVector::zeros(2);
    assert_eq!(error_trajectory(&r, &y).unwrap(), r);
    assert_eq!(error_trajectory(&r, &r).unwrap(), DVector::zeros(2));
    let y = DVector::from_vec(vec![0.3, -4.0]);
    assert_eq!(error_trajectory(&r, &y).unwrap(), -error_trajectory(&y, &r).unwrap());
    assert!(error_trajectory(&r, &DVector::zeros(3)).is_err());
}

#[test]
fn significant_frequency_of_single_tone() {
    let fs = 50.0;
    let n = 100;
    let f0 = significant_frequency(&sine(n, 2.0, 1.0, fs), fs, DEFAULT_POWER_THRESHOLD).unwrap();
    assert!((f0 - 2.0).abs() <= fs / n as f64, "{f0}");
    // off-bin tone
    let f0 = significant_frequency(&sine(n, 2.2, 1.0, fs), fs, 0.9).unwrap();
    assert!((f0 - 2.2).abs() <= fs / n as f64, "{f0}");
}

#[test]
fn significant_frequency_of_two_tones() {
    let fs = 50.0;
    let n = 200;
    let x = sine(n, 1.0, 1.0, fs) + sine(n, 5.0, 0.05, fs);
    // the 1 Hz line holds 1 / (1 + 0.05^2) of the power
    let share = 1.0 / (1.0 + 0.05f64.powi(2));
    assert!(share >= 0.99);
    assert_relative_eq!(significant_frequency(&x, fs, 0.99).unwrap(), 1.0, epsilon = 1e-12);
    assert_relative_eq!(significant_frequency(&x, fs, 0.999).unwrap(), 5.0, epsilon = 1e-12);
}

#[test]
fn significant_frequency_of_white_noise() {
    let fs = 50.0;
    let mean: f64 = (0..10)
        .map(|seed| significant_frequency(&white(500, seed), fs, 0.99).unwrap())
        .sum::<f64>()
        / 10.0;
    assert!(mean >= 0.9 * (fs / 2.0) * 0.99, "{mean}");
}

#[test]
fn significant_frequency_rejects_bad_input() {
    assert!(significant_frequency(&DVector::from_element(10, 3.0), 50.0, 0.99).is_err());
    assert!(significant_frequency(&DVector::zeros(10), 50.0, 0.99).is_err());
    assert!(significant_frequency(&white(10, 1), 50.0, 1.0).is_err());
    assert!(significant_frequency(&white(10, 1), 50.0, 0.0).is_err());
}

#[test]
fn lowpass_passband_and_stopband() {
    let fs = 50.0;
    let n = 100;
    let low = sine(n, 1.0, 1.0, fs);
    let high = sine(n, 10.0, 1.0, fs);
    let out = zero_phase_lowpass(&(&low + &high), 5.0, fs).unwrap();
    assert!((&out - &low).amax() <= 1e-10);
    assert!(zero_phase_lowpass(&high, 5.0, fs).unwrap().amax() <= 1e-10);
    assert!((zero_phase_lowpass(&low, 5.0, fs).unwrap() - &low).amax() <= 1e-10);
}

#[test]
fn lowpass_rejects_cutoff_outside_band() {
    let x = white(16, 2);
    assert!(zero_phase_lowpass(&x, 0.0, 50.0).is_err());
    assert!(zero_phase_lowpass(&x, 25.0, 50.0).is_err());
    assert!(zero_phase_lowpass(&x, 30.0, 50.0).is_err());
}

#[test]
fn relative_error_examples() {
    let r = DVector::from_vec(vec![3.0, 4.0]);
    let e = DVector::from_vec(vec![0.45, 0.6]);
    let m = relative_error(&e, &r, 0.05).unwrap();
    assert_relative_eq!(m.relative_raw, 0.15, epsilon = 1e-15);
    assert_relative_eq!(m.relative, 0.10, epsilon = 1e-15);
    assert_relative_eq!(m.error_norm, 0.75, epsilon = 1e-15);
    let e = DVector::from_vec(vec![0.24, 0.32]);
    let m = relative_error(&e, &r, 0.12).unwrap();
    assert_relative_eq!(m.relative_raw, 0.08, epsilon = 1e-15);
    assert_eq!(m.relative, 0.0);
    assert_eq!(relative_error(&DVector::zeros(2), &r, 0.0).unwrap().relative, 0.0);
    assert!(relative_error(&e, &DVector::zeros(2), 0.0).is_err());
    assert!(relative_error(&e, &r, -0.1).is_err());
}

#[test]
fn repetitive_error_examples() {
    let r = DVector::from_vec(vec![3.0, 4.0]);
    assert_eq!(max_repetitive_error(&[r.clone(), r.clone()], &r).unwrap(), 0.0);
    let y = &r - DVector::from_vec(vec![0.21, 0.28]);
    assert_relative_eq!(max_repetitive_error(&[y], &r).unwrap(), 0.07, epsilon = 1e-15);
    assert!(max_repetitive_error(&[], &r).is_err());
    assert!(max_repetitive_error(&[r.clone()], &DVector::zeros(2)).is_err());
}

#[test]
fn repetitive_error_matches_noise_prediction_on_linear_plant() {
    let spec = linear_plant();
    let n = 100;
    let reference = generate_reference(&spec, 7, 2.0, 0.05, n).unwrap();
    let u = reference.realizing_input.clone().unwrap();
    let predicted = spec.output_noise_std * (n as f64).sqrt() / reference.norm();
    for campaign in 0..5u64 {
        let outputs: Vec<_> = (0..10)
            .map(|i| run_trial(&spec, &u, campaign * 100 + i, true).unwrap().record.output)
            .collect();
        let e_r = max_repetitive_error(&outputs, &reference.r).unwrap();
        assert!(e_r >= 0.5 * predicted && e_r <= 2.0 * predicted, "{e_r} vs {predicted}");
    }
}

#[test]
fn generated_reference_replays_exactly() {
    let spec = linear_plant();
    let reference = generate_reference(&spec, 3, 1.0, 0.1, 100).unwrap();
    let u = reference.realizing_input.as_ref().unwrap();
    let replay = run_trial(&spec, u, 99, false).unwrap();
    assert!((replay.record.output - &reference.r).amax() <= 1e-10);
    assert!(reference.norm() > 0.0);
    assert_eq!(generate_reference(&spec, 3, 1.0, 0.1, 100).unwrap(), reference);
    assert_ne!(generate_reference(&spec, 4, 1.0, 0.1, 100).unwrap().r, reference.r);
}

#[test]
fn zero_variance_reference_is_free_response() {
    for id in [PlantId::Cube, PlantId::Twipr, PlantId::Pendu, PlantId::Linear] {
        let spec = PlantCatalog::builtin().get(id).unwrap().clone();
        let reference = generate_reference(&spec, 1, 1.0, 0.0, 50).unwrap();
        assert_eq!(reference.r.amax(), 0.0);
    }
}

#[test]
fn diverging_generation_reports_failure() {
    let mut spec = linear_plant();
    spec.physics = crate::plant::Physics::Linear {
        a: vec![vec![40.0]],
        b: vec![1.0],
    };
    spec.output_row = vec![1.0];
    assert!(matches!(
        generate_reference(&spec, 1, 2.0, 1.0, 100),
        Err(Error::GenerationFailed(_))
    ));
}

#[test]
fn reference_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.csv");
    let reference = generate_reference(&linear_plant(), 5, 2.0, 0.3, 64).unwrap();
    save_reference(&reference, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("n,r,u_realizing\n"));
    assert_eq!(load_reference(&path).unwrap(), reference);

    let plain = Reference::new(
        DVector::from_vec(vec![0.1, 0.2, 0.3]),
        50.0,
        Provenance::Loaded { path: path.clone() },
        None,
    )
    .unwrap();
    save_reference(&plain, &path).unwrap();
    assert_eq!(load_reference(&path).unwrap(), plain);
}

#[test]
fn reference_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.csv");
    assert!(matches!(load_reference(&path), Err(Error::NotFound(_))));
    let reference = generate_reference(&linear_plant(), 5, 2.0, 0.3, 10).unwrap();
    save_reference(&reference, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.len() - 12;
    std::fs::write(&path, &text[..cut]).unwrap();
    match load_reference(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 11),
        other => panic!("expected parse error, got {other:?}"),
    }
    std::fs::write(&path, "n,r,u_realizing\n0,1.0,0.0\n1,abc,0.0\n").unwrap();
    match load_reference(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn reference_invariants() {
    let r = DVector::from_vec(vec![1.0, 2.0]);
    assert!(Reference::new(DVector::from_vec(vec![1.0]), 50.0, Provenance::Loaded { path: "x".into() }, None).is_err());
    assert!(Reference::new(r.clone(), 0.0, Provenance::Loaded { path: "x".into() }, None).is_err());
    let generated = Provenance::Generated {
        plant: PlantId::Linear,
        seed: 1,
        cutoff_hz: 1.0,
        input_variance: 0.1,
    };
    assert!(Reference::new(r.clone(), 50.0, generated.clone(), None).is_err());
    assert!(Reference::new(r.clone(), 50.0, generated, Some(DVector::zeros(2))).is_ok());
}

proptest! {
    #[test]
    fn lowpass_is_idempotent_and_keeps_mean(
        data in proptest::collection::vec(-10.0f64..10.0, 8..80),
        cutoff in 0.5f64..24.0,
    ) {
        let x = DVector::from_vec(data);
        let once = zero_phase_lowpass(&x, cutoff, 50.0).unwrap();
        let twice = zero_phase_lowpass(&once, cutoff, 50.0).unwrap();
        prop_assert!((&twice - &once).amax() <= 1e-12 * x.amax().max(1.0));
        prop_assert!((once.mean() - x.mean()).abs() <= 1e-12 * x.amax().max(1.0));
    }

    #[test]
    fn relative_error_is_clamped_and_monotone(
        scale_a in 0.0f64..5.0,
        scale_b in 0.0f64..5.0,
        floor in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let r = white(20, seed) + DVector::from_element(20, 0.1);
        let e = white(20, seed + 1);
        let (lo, hi) = if scale_a <= scale_b { (scale_a, scale_b) } else { (scale_b, scale_a) };
        let a = relative_error(&(&e * lo), &r, floor).unwrap();
        let b = relative_error(&(&e * hi), &r, floor).unwrap();
        prop_assert!(a.relative >= 0.0);
        prop_assert!(a.relative <= b.relative);
    }

    #[test]
    fn significant_frequency_grows_with_threshold(
        seed in 0u64..1000,
        t1 in 0.05f64..0.95,
        dt in 0.0f64..0.04,
    ) {
        let x = white(64, seed);
        let a = significant_frequency(&x, 50.0, t1).unwrap();
        let b = significant_frequency(&x, 50.0, t1 + dt).unwrap();
        prop_assert!(a <= b);
    }
}
