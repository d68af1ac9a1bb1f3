//! Acceptance suite. Each `criterion_*` test checks one acceptance criterion
//! and writes a single PASS/FAIL line to stderr (uncaptured).
//!
//! The tests hold a shared lock so the wall-clock budgets are measured
//! without other tests competing for the CPU.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use aimole::dynamics::{io_predict, is_rollout, linearize_io, linearize_is, IoModel, IoRegressor, IsModel, LiftedJacobian, TrialRecord};
use aimole::gp::{gp_predict_cov, gp_predict_mean, kernel_matrix, log_marginal_likelihood, GpDataset, GpModel, FitConfig, KernelKind, KernelParams};
use aimole::harness::{
    default_tasks, load_campaign, run_learning, run_suite, save_campaign, CampaignConfig, GpSettings, SuiteConfig,
    SuiteReport,
};
use aimole::ilc::{compute_weights, learning_gain, update_input, Variant};
use aimole::plant::{lifted_matrix_linear, run_trial, PlantCatalog, PlantId, PlantSpec};
use aimole::seed::rng_from_seed;
use aimole::signal::{
    filtered_gaussian, generate_reference, load_reference, max_repetitive_error, relative_error, save_reference,
};
use aimole::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("criterion {criterion}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn builtin(id: PlantId) -> PlantSpec {
    PlantCatalog::builtin().get(id).unwrap().clone()
}

// ---------------------------------------------------------------- criterion 1

fn random_dataset(seed: u64, k: usize, d: usize) -> GpDataset {
    let mut rng = rng_from_seed(seed);
    let design = DMatrix::from_fn(d, k, |_, _| rng.gen_range(-2.0f64..2.0));
    let targets = DVector::from_fn(k, |i, _| {
        design.column(i).iter().map(|v| (1.3 * v).sin()).sum::<f64>() + 0.1 * rng.sample::<f64, _>(StandardNormal)
    });
    GpDataset::new(design, targets).unwrap()
}

/// Posterior mean (target units) and covariance (standardized units) with an explicit inverse.
fn dense_posterior(model: &GpModel, q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let ds = model.dataset();
    let params = model.params();
    let kind = model.kind();
    let mut k = kernel_matrix(ds.design(), ds.design(), params, kind).unwrap();
    for i in 0..k.nrows() {
        k[(i, i)] += params.noise_variance + model.factor().jitter();
    }
    let inv = k.try_inverse().unwrap();
    let kq = kernel_matrix(q, ds.design(), params, kind).unwrap();
    let kqq = kernel_matrix(q, q, params, kind).unwrap();
    let z = ds.standardized_targets();
    let mean = (&kq * &inv * z).map(|m| m * ds.target_scale() + ds.target_shift());
    let cov = kqq - &kq * &inv * kq.transpose();
    (mean, cov)
}

#[test]
fn criterion_1_gp_gradient_and_posterior() {
    let _guard = serial();
    let started = Instant::now();
    let h = 1e-5;
    let mut worst_grad = 0.0f64;
    let mut worst_post = 0.0f64;
    for seed in 0..20u64 {
        let d = 1 + (seed as usize % 5);
        let ds = random_dataset(500 + seed, 10, d);
        let mut rng = rng_from_seed(900 + seed);
        for kind in [KernelKind::Shared, KernelKind::Ard] {
            let groups = if kind == KernelKind::Shared { 1 } else { d };
            let mut x: Vec<f64> = (0..groups).map(|_| rng.gen_range(-0.7..1.2)).collect();
            x.push(rng.gen_range(-5.0..-1.0));
            let params = |x: &[f64]| KernelParams::new(x[..groups].iter().map(|t| t.exp()).collect(), x[groups].exp()).unwrap();
            let (_, grad) = log_marginal_likelihood(&ds, &params(&x), kind).unwrap();
            for i in 0..x.len() {
                let mut a = x.clone();
                let mut b = x.clone();
                a[i] += h;
                b[i] -= h;
                let fa = log_marginal_likelihood(&ds, &params(&a), kind).unwrap().0;
                let fb = log_marginal_likelihood(&ds, &params(&b), kind).unwrap().0;
                let fd = (fa - fb) / (2.0 * h);
                worst_grad = worst_grad.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
            }

            let model = GpModel::from_params(ds.clone(), params(&x), kind).unwrap();
            let q = DMatrix::from_fn(d, 4, |_, _| rng.gen_range(-2.5f64..2.5));
            let (mean_o, cov_o) = dense_posterior(&model, &q);
            let mean = gp_predict_mean(&model, &q).unwrap();
            let cov = gp_predict_cov(&model, &q).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-6);
            for i in 0..4 {
                worst_post = worst_post.max(rel(mean[i], mean_o[i]));
                for j in 0..4 {
                    // the computed covariance clamps tiny negative diagonal entries to zero
                    let oracle = if i == j { cov_o[(i, j)].max(0.0) } else { cov_o[(i, j)] };
                    worst_post = worst_post.max((cov[(i, j)] - oracle).abs() / oracle.abs().max(1e-6));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let pass = worst_grad <= 1e-5 && worst_post <= 1e-8 && elapsed < Duration::from_secs(10);
    report(
        1,
        pass,
        &format!(
            "max gradient rel err {worst_grad:.2e} (<= 1e-5), max posterior rel err {worst_post:.2e} (<= 1e-8), {:.2}s (< 10s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ------------------------------------------------------------- criteria 2, 3

const N: usize = 50;

fn cube_trials(seed: u64, count: usize) -> (PlantSpec, Vec<TrialRecord>) {
    let spec = builtin(PlantId::Cube);
    let trials = (0..count)
        .map(|j| {
            let u = filtered_gaussian(N, 0.01, 3.0, spec.fs, seed * 100 + j as u64).unwrap();
            let mut rec = run_trial(&spec, &u, seed * 100 + 50 + j as u64, true).unwrap().record;
            rec.index = j + 1;
            rec
        })
        .collect();
    (spec, trials)
}

fn finite_difference<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, u: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = u.len();
    let mut out = DMatrix::zeros(n, n);
    for m in 0..n {
        let mut a = u.clone();
        let mut b = u.clone();
        a[m] += h;
        b[m] -= h;
        out.set_column(m, &((f(&a) - f(&b)) / (2.0 * h)));
    }
    out
}

fn scaled_inf_error(p: &LiftedJacobian, fd: &DMatrix<f64>) -> f64 {
    (p.matrix() - fd).amax() / fd.amax().max(1e-12)
}

#[test]
fn criterion_2_jacobians_match_finite_differences() {
    let _guard = serial();
    let started = Instant::now();
    let cfg = FitConfig::default();
    let mut worst_io = 0.0f64;
    let mut worst_is = 0.0f64;
    for seed in 0..5u64 {
        let (spec, trials) = cube_trials(seed, 3);
        let io = IoModel::fit(&trials, IoRegressor::Previous, &cfg).unwrap();
        let is = IsModel::fit(&trials, &spec.output_row, &cfg, None).unwrap();
        let x1 = trials[2].initial_state().unwrap();
        for k in 0..3u64 {
            let u = filtered_gaussian(N, 0.01, 3.0, spec.fs, 7000 + 10 * seed + k).unwrap();
            let p = linearize_io(&io, &u).unwrap();
            let fd = finite_difference(|v| io_predict(&io, v).unwrap(), &u, 1e-6);
            worst_io = worst_io.max(scaled_inf_error(&p, &fd));

            let p = linearize_is(&is, &u, &x1).unwrap();
            let fd = finite_difference(|v| is_rollout(&is, v, &x1).unwrap().0, &u, 1e-6);
            worst_is = worst_is.max(scaled_inf_error(&p, &fd));
        }
    }
    let elapsed = started.elapsed();
    let pass = worst_io <= 1e-4 && worst_is <= 1e-4 && elapsed < Duration::from_secs(60);
    report(
        2,
        pass,
        &format!(
            "IO scaled inf-norm error {worst_io:.2e}, IS {worst_is:.2e} (<= 1e-4), {:.1}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_io_model_is_causal() {
    let _guard = serial();
    let (spec, trials) = cube_trials(11, 3);
    let io = IoModel::fit(&trials, IoRegressor::Previous, &FitConfig::default()).unwrap();
    let u = filtered_gaussian(N, 0.01, 3.0, spec.fs, 4242).unwrap();
    let y = io_predict(&io, &u).unwrap();
    let p = linearize_io(&io, &u).unwrap();
    let mut violations = 0usize;
    let mut moved = 0usize;
    for m in 0..N {
        let mut v = u.clone();
        v[m] += 0.05;
        let yv = io_predict(&io, &v).unwrap();
        for n in 0..N {
            if n <= m && yv[n] != y[n] {
                violations += 1;
            }
            if n > m && yv[n] != y[n] {
                moved += 1;
            }
            if m >= n && p.matrix()[(n, m)] != 0.0 {
                violations += 1;
            }
        }
    }
    let pass = violations == 0 && moved > 0;
    report(
        3,
        pass,
        &format!("{violations} non-causal responses over {N}x{N} pairs; {moved} strictly-later outputs respond"),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_exact_model_ilc_on_linear_plant() {
    let _guard = serial();
    let started = Instant::now();
    let spec = builtin(PlantId::Linear).noiseless();
    let reference = generate_reference(&spec, 21, 1.0, 0.01, 100).unwrap();
    let n = reference.len();
    let p = LiftedJacobian(lifted_matrix_linear(&spec, n).unwrap());
    let weights = compute_weights(&p, Variant::Io).unwrap();
    let gain = learning_gain(&p, &weights).unwrap();
    let mut u = DVector::zeros(n);
    let mut norms = Vec::new();
    for _ in 0..15 {
        let y = run_trial(&spec, &u, 0, false).unwrap().clean_output;
        let e = &reference.r - y;
        norms.push(e.norm());
        u = update_input(&u, &e, &gain).unwrap();
    }
    let monotone = norms.windows(2).all(|w| w[1] <= w[0]);
    let ratio = norms[14] / norms[0];
    let elapsed = started.elapsed();
    let pass = monotone && ratio <= 1e-3 && elapsed < Duration::from_secs(5);
    report(
        4,
        pass,
        &format!(
            "non-increasing: {monotone}, |e15|/|e1| = {ratio:.2e} (<= 1e-3), {:.2}s (< 5s)",
            elapsed.as_secs_f64()
        ),
    );
}

// ------------------------------------------------------------- criteria 5, 6

struct SuiteRun {
    report: SuiteReport,
    elapsed: Duration,
}

fn suite_run(variant: Variant) -> SuiteRun {
    let cfg = SuiteConfig {
        tasks: default_tasks(),
        seeds: (0..5).collect(),
        variants: vec![variant],
        // trials-to-50% and -80% are fixed once 80% is reached, so later trials are skipped
        base: CampaignConfig {
            trials: 15,
            stop_at_reduction: Some(0.8),
            ..CampaignConfig::default()
        },
        out: None,
    };
    let started = Instant::now();
    let report = run_suite(&cfg).expect("suite runs");
    SuiteRun {
        report,
        elapsed: started.elapsed(),
    }
}

fn io_suite() -> &'static SuiteRun {
    static IO: OnceLock<SuiteRun> = OnceLock::new();
    IO.get_or_init(|| suite_run(Variant::Io))
}

#[test]
fn criterion_5_io_learning_on_nine_tasks() {
    let _guard = serial();
    let run = io_suite();
    let mut worst80 = 0.0f64;
    let mut worst50 = 0.0f64;
    let mut per_task = Vec::new();
    for task in default_tasks() {
        let m80 = run.report.task_median(&task.name, Variant::Io, 0.8);
        let m50 = run.report.task_median(&task.name, Variant::Io, 0.5);
        worst80 = worst80.max(m80);
        worst50 = worst50.max(m50);
        per_task.push(format!("{} {m50}/{m80}", task.name));
    }
    let pass = worst80 <= 10.0 && worst50 <= 5.0 && run.elapsed < Duration::from_secs(30 * 60);
    report(
        5,
        pass,
        &format!(
            "worst task median t80 {worst80} (<= 10), t50 {worst50} (<= 5), {:.0}s (< 1800s); median t50/t80 per task: {}",
            run.elapsed.as_secs_f64(),
            per_task.join(", ")
        ),
    );
}

#[test]
fn criterion_6_state_model_learns_at_least_as_fast() {
    let _guard = serial();
    let io = io_suite();
    let is = suite_run(Variant::Is);
    let io_stats = io.report.stats_for(Variant::Io).unwrap();
    let is_stats = is.report.stats_for(Variant::Is).unwrap();
    let per_task: Vec<String> = default_tasks()
        .iter()
        .map(|t| format!("{} {}", t.name, is.report.task_median(&t.name, Variant::Is, 0.8)))
        .collect();
    let pass = is_stats.mean_trials_to_80 <= io_stats.mean_trials_to_80
        && is_stats.median_trials_to_80 <= 5.0
        && is.elapsed < Duration::from_secs(30 * 60);
    report(
        6,
        pass,
        &format!(
            "mean t80 IS {:.2} vs IO {:.2}, IS median t80 {} (<= 5) over {} campaigns, {:.0}s (< 1800s); IS task medians: {}",
            is_stats.mean_trials_to_80,
            io_stats.mean_trials_to_80,
            is_stats.median_trials_to_80,
            is_stats.campaigns,
            is.elapsed.as_secs_f64(),
            per_task.join(", ")
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

/// Error vector with `|e| / |r| = rel` for the reference `(3, 4)`.
fn scaled_error(rel: f64) -> DVector<f64> {
    DVector::from_vec(vec![3.0 * rel, 4.0 * rel])
}

#[test]
fn criterion_7_error_metrics_hand_cases() {
    let _guard = serial();
    let r = DVector::from_vec(vec![3.0, 4.0]);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut checks: Vec<(&str, bool)> = Vec::new();

    // floors of the three testbeds: CUBE 5%, TWIPR 12%, PENDU 10%
    let cube = relative_error(&scaled_error(0.15), &r, 0.05).unwrap();
    checks.push(("0.15 - 0.05 = 0.10", close(cube.relative_raw, 0.15) && close(cube.relative, 0.10)));
    let twipr = relative_error(&scaled_error(0.08), &r, 0.12).unwrap();
    checks.push(("0.08 under 0.12 clamps to 0", twipr.relative == 0.0 && close(twipr.relative_raw, 0.08)));
    let pendu = relative_error(&scaled_error(0.25), &r, 0.10).unwrap();
    checks.push(("0.25 - 0.10 = 0.15", close(pendu.relative, 0.15)));
    let zero = relative_error(&DVector::zeros(2), &r, 0.05).unwrap();
    checks.push(("e = 0 gives 0", zero.relative == 0.0 && zero.error_norm == 0.0));
    checks.push((
        "zero reference rejected",
        relative_error(&scaled_error(0.1), &DVector::zeros(2), 0.0).is_err(),
    ));

    let same = vec![r.clone(); 10];
    checks.push(("identical runs give 0", max_repetitive_error(&same, &r).unwrap() == 0.0));
    let single = vec![&r - scaled_error(0.07)];
    checks.push(("single run 0.07", close(max_repetitive_error(&single, &r).unwrap(), 0.07)));
    let mixed: Vec<DVector<f64>> = [0.03, 0.12, 0.05, 0.1].iter().map(|d| &r + scaled_error(*d)).collect();
    checks.push(("max over runs 0.12", close(max_repetitive_error(&mixed, &r).unwrap(), 0.12)));
    checks.push(("no runs rejected", max_repetitive_error(&[], &r).is_err()));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        7,
        failed.is_empty(),
        &format!("{} of {} hand cases hold; failing: {failed:?}", checks.len() - failed.len(), checks.len()),
    );
}

// ------------------------------------------------------------- criteria 8, 9

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_aimole")).args(args).output().expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn criterion_8_learn_is_byte_reproducible() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig {
        plant: PlantId::Cube,
        trials: 4,
        seed: 17,
        gp: GpSettings {
            starts: 3,
            ..GpSettings::default()
        },
        ..CampaignConfig::default()
    };
    let cfg_path = dir.path().join("learn.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let mut csvs = Vec::new();
    let mut codes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let (code, _) = cli(&["learn", "--config", path_str(&cfg_path), "--out", path_str(&out)]);
        codes.push(code);
        csvs.push(std::fs::read(out.join("trials.csv")).unwrap_or_default());
    }
    // a different seed must change the log
    let other = dir.path().join("c");
    let (code_c, _) = cli(&["learn", "--config", path_str(&cfg_path), "--seed", "18", "--out", path_str(&other)]);
    let csv_c = std::fs::read(other.join("trials.csv")).unwrap_or_default();
    let pass = codes == [0, 0] && code_c == 0 && !csvs[0].is_empty() && csvs[0] == csvs[1] && csvs[0] != csv_c;
    report(
        8,
        pass,
        &format!(
            "exit codes {codes:?}, trials.csv {} bytes, identical: {}, other seed differs: {}",
            csvs[0].len(),
            csvs[0] == csvs[1],
            csvs[0] != csv_c
        ),
    );
}

#[test]
fn criterion_9_persistence_and_exit_codes() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut checks: Vec<(&str, bool)> = Vec::new();

    // campaign log
    let cfg = CampaignConfig {
        trials: 3,
        out: Some(dir.path().join("campaign")),
        record_wall_time: true,
        ..CampaignConfig::default()
    };
    let log = run_learning(&cfg).unwrap();
    checks.push(("campaign round trip", load_campaign(&dir.path().join("campaign")).ok().as_ref() == Some(&log)));
    save_campaign(&log, &dir.path().join("again")).unwrap();
    checks.push(("campaign re-save", load_campaign(&dir.path().join("again")).ok().as_ref() == Some(&log)));
    checks.push((
        "empty directory is not-found",
        matches!(load_campaign(dir.path()), Err(Error::NotFound(_))),
    ));

    // reference
    let cube = builtin(PlantId::Cube);
    let reference = generate_reference(&cube, 5, 1.0, 0.01, 100).unwrap();
    let ref_path = dir.path().join("ref.csv");
    save_reference(&reference, &ref_path).unwrap();
    checks.push(("reference round trip", load_reference(&ref_path).ok().as_ref() == Some(&reference)));

    // plant parameters
    let catalog = PlantCatalog::builtin();
    let plants_path = dir.path().join("plants.json");
    catalog.save(&plants_path).unwrap();
    let back = PlantCatalog::load(&plants_path).unwrap();
    checks.push(("plant parameters round trip", back == catalog && back.to_json() == catalog.to_json()));

    // exit codes
    let (ok, _) = cli(&["refgen", "--plant", "twipr", "--seed", "3", "--out", path_str(&dir.path().join("twipr.csv"))]);
    checks.push(("refgen exits 0", ok == 0));

    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, "{ \"trials\": 3,, }").unwrap();
    let (malformed, _) = cli(&["learn", "--config", path_str(&bad_cfg)]);
    checks.push(("malformed config exits 2", malformed == 2));
    std::fs::write(&bad_cfg, "{ \"trials\": 0 }").unwrap();
    let (invalid, _) = cli(&["learn", "--config", path_str(&bad_cfg)]);
    checks.push(("invalid config exits 2", invalid == 2));

    let mut unstable = catalog.clone();
    let twipr = unstable.plants.get_mut(&PlantId::Twipr).unwrap();
    twipr.feedback_gain = None;
    twipr.divergence_bound = 10.0;
    let unstable_path = dir.path().join("unstable.json");
    unstable.save(&unstable_path).unwrap();
    let (diverged, text) = cli(&[
        "learn",
        "--plant",
        "twipr",
        "--plants",
        path_str(&unstable_path),
        "--reference",
        path_str(&dir.path().join("twipr.csv")),
        "--trials",
        "2",
    ]);
    checks.push(("forced divergence exits 3", diverged == 3 && text.contains("diverged")));

    let mut dead = catalog.clone();
    dead.plants.get_mut(&PlantId::Cube).unwrap().input_bounds = Some([-1e-12, 1e-12]);
    let dead_path = dir.path().join("dead.json");
    dead.save(&dead_path).unwrap();
    let (numerical, _) = cli(&[
        "learn",
        "--plant",
        "cube",
        "--plants",
        path_str(&dead_path),
        "--reference",
        path_str(&ref_path),
        "--trials",
        "2",
    ]);
    checks.push(("ineffective actuation exits 4", numerical == 4));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        9,
        failed.is_empty(),
        &format!("{} of {} checks hold; failing: {failed:?}", checks.len() - failed.len(), checks.len()),
    );
}
