use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{CampaignConfig, ReferenceSource, VarianceChoice};
use super::persist::save_campaign;
use crate::dynamics::{linearize_io, linearize_is, truncate_history, IoModel, IsModel, TrialRecord};
use crate::error::{Error, Result};
use crate::gp::KernelParams;
use crate::ilc::{
    auto_input_variance, clip_input, compute_weights, initial_input, learning_gain, update_input, Variant,
};
use crate::plant::{run_trial, PlantCatalog, PlantSpec};
use crate::seed::{derive_seed, Stream};
use crate::signal::{error_trajectory, generate_reference, load_reference, max_repetitive_error, relative_error, Reference};

/// One executed trial of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialEntry {
    pub j: usize,
    pub err_norm: f64,
    pub rel_raw: f64,
    pub eps: f64,
    pub wall_s: f64,
    /// `|P_j|_2` of the model trained after this trial.
    pub p_norm: f64,
    /// Hyperparameters of that model (one set per GP).
    pub hyperparams: Vec<KernelParams>,
    /// The model was flat and the next input was re-randomized.
    pub reseeded: bool,
    pub input: DVector<f64>,
    pub output: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CampaignStatus {
    Completed,
    EarlyStopped { reason: String },
    Aborted { trial: usize, error: String },
}

/// Full record of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignLog {
    pub config: CampaignConfig,
    pub plant: PlantSpec,
    pub reference: Reference,
    pub repetitive_floor: f64,
    /// `sigma_I^2` used for the first input.
    pub input_variance: f64,
    pub entries: Vec<TrialEntry>,
    /// Input computed after the last trial.
    pub final_input: Option<DVector<f64>>,
    pub status: CampaignStatus,
}

impl CampaignLog {
    pub fn eps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eps).collect()
    }

    pub fn err_norms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.err_norm).collect()
    }

    pub fn trials_to(&self, fraction: f64) -> Option<usize> {
        trials_to_reduction(&self.eps(), fraction)
    }
}

/// First trial index `j` (1-based) with `eps_j <= (1 - fraction) eps_1`.
pub fn trials_to_reduction(eps: &[f64], fraction: f64) -> Option<usize> {
    let first = *eps.first()?;
    let target = (1.0 - fraction) * first;
    eps.iter().position(|e| *e <= target).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityResult {
    pub repetitive_error: f64,
    pub outputs: Vec<DVector<f64>>,
}

/// Replay the realizing input `runs` times with noise and report the largest deviation.
pub fn run_repeatability(spec: &PlantSpec, reference: &Reference, runs: usize, master_seed: u64) -> Result<RepeatabilityResult> {
    let u = reference
        .realizing_input
        .as_ref()
        .ok_or_else(|| Error::invalid("reference has no realizing input to replay"))?;
    if runs == 0 {
        return Err(Error::invalid("at least one run is required"));
    }
    let outputs = (0..runs)
        .map(|i| {
            run_trial(spec, u, derive_seed(master_seed, Stream::Repeatability, i as u64), true)
                .map(|sim| sim.record.output)
        })
        .collect::<Result<Vec<_>>>()?;
    let repetitive_error = max_repetitive_error(&outputs, &reference.r)?;
    Ok(RepeatabilityResult {
        repetitive_error,
        outputs,
    })
}

/// Resolve the plant parameters of a config.
pub fn resolve_plant(cfg: &CampaignConfig) -> Result<PlantSpec> {
    let catalog = match &cfg.plant_file {
        Some(path) => PlantCatalog::load(path)?,
        None => PlantCatalog::builtin(),
    };
    catalog.get(cfg.plant).cloned()
}

pub(crate) fn resolve_reference(cfg: &CampaignConfig, spec: &PlantSpec) -> Result<Reference> {
    match &cfg.reference {
        ReferenceSource::Generate {
            cutoff_hz,
            input_variance,
            samples,
            seed,
        } => {
            let seed = seed.unwrap_or_else(|| derive_seed(cfg.seed, Stream::Reference, 0));
            generate_reference(spec, seed, *cutoff_hz, *input_variance, *samples)
        }
        ReferenceSource::File { path } => {
            let reference = load_reference(path)?;
            if (reference.fs - spec.fs).abs() > 1e-12 * spec.fs {
                return Err(Error::Config(format!(
                    "reference sampled at {} Hz, plant runs at {} Hz",
                    reference.fs, spec.fs
                )));
            }
            Ok(reference)
        }
    }
}

/// Run a campaign with the plant named in the config.
pub fn run_learning(cfg: &CampaignConfig) -> Result<CampaignLog> {
    cfg.validate()?;
    let spec = resolve_plant(cfg)?;
    run_learning_with(cfg, &spec)
}

/// Run a campaign against explicit plant parameters. When `cfg.out` is set the
/// log is persisted, including the partial log of an aborted campaign.
pub fn run_learning_with(cfg: &CampaignConfig, spec: &PlantSpec) -> Result<CampaignLog> {
    cfg.validate()?;
    spec.validate()?;
    let reference = resolve_reference(cfg, spec)?;
    if !(reference.norm() > 0.0) {
        return Err(Error::Config("reference is identically zero".into()));
    }
    let repetitive_floor = match &reference.realizing_input {
        Some(_) => run_repeatability(spec, &reference, cfg.repeat_runs, cfg.seed)?.repetitive_error,
        None => cfg.repetitive_floor.unwrap_or(0.0),
    };
    let input_variance = match cfg.init.variance {
        VarianceChoice::Fixed(v) => v,
        VarianceChoice::Auto(_) => probe_variance(cfg, spec, &reference)?,
    };

    let mut log = CampaignLog {
        config: cfg.clone(),
        plant: spec.clone(),
        reference,
        repetitive_floor,
        input_variance,
        entries: Vec::new(),
        final_input: None,
        status: CampaignStatus::Completed,
    };
    let outcome = learning_loop(cfg, spec, &mut log);
    if let Err(e) = &outcome {
        log.status = CampaignStatus::Aborted {
            trial: log.entries.len() + 1,
            error: e.to_string(),
        };
    }
    if let Some(dir) = &cfg.out {
        save_campaign(&log, dir)?;
    }
    outcome.map(|_| log)
}

fn probe_variance(cfg: &CampaignConfig, spec: &PlantSpec, reference: &Reference) -> Result<f64> {
    let n = reference.len();
    let quiet = run_trial(spec, &DVector::zeros(n), derive_seed(cfg.seed, Stream::Probe, 0), true)?;
    let y = &quiet.record.output;
    let mean = y.mean();
    let sigma_y = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let init = cfg
        .init
        .to_init_config(cfg.init.probe_start_variance, derive_seed(cfg.seed, Stream::InitialInput, 0));
    let mut counter = 0u64;
    auto_input_variance(
        &reference.r,
        reference.fs,
        |u| {
            counter += 1;
            Ok(run_trial(spec, u, derive_seed(cfg.seed, Stream::Probe, counter), true)?
                .record
                .output)
        },
        sigma_y,
        &init,
    )
}

enum Fitted {
    Io(IoModel),
    Is(IsModel),
}

impl Fitted {
    fn hyperparams(&self) -> Vec<KernelParams> {
        match self {
            Fitted::Io(m) => vec![m.gp().params().clone()],
            Fitted::Is(m) => m.gps().iter().map(|g| g.params().clone()).collect(),
        }
    }
}

fn fit_model(
    cfg: &CampaignConfig,
    spec: &PlantSpec,
    window: &[TrialRecord],
    warm: Option<&[KernelParams]>,
    j: usize,
) -> Result<Fitted> {
    let mut fit = cfg.gp.to_fit_config(derive_seed(cfg.seed, Stream::GpStarts, j as u64));
    match cfg.variant {
        Variant::Io => {
            fit.warm_start = warm.and_then(|w| w.first().cloned());
            IoModel::fit(window, cfg.io_regressor, &fit).map(Fitted::Io)
        }
        Variant::Is => IsModel::fit(window, &spec.output_row, &fit, warm).map(Fitted::Is),
    }
}

fn learning_loop(cfg: &CampaignConfig, spec: &PlantSpec, log: &mut CampaignLog) -> Result<()> {
    let r = log.reference.r.clone();
    let fs = log.reference.fs;
    let init = cfg
        .init
        .to_init_config(log.input_variance, derive_seed(cfg.seed, Stream::InitialInput, 0));
    let mut u = clip_input(&initial_input(&r, &init, fs)?, spec.input_bounds);
    let mut history: Vec<TrialRecord> = Vec::new();
    let mut warm: Option<Vec<KernelParams>> = None;

    for j in 1..=cfg.trials {
        let started = Instant::now();
        let sim = run_trial(spec, &u, derive_seed(cfg.seed, Stream::PlantNoise, j as u64), true)?;
        let mut record = sim.record;
        record.index = j;
        let e = error_trajectory(&r, &record.output)?;
        let metrics = relative_error(&e, &r, log.repetitive_floor)?;
        let output = record.output.clone();
        history.push(record);
        let window = truncate_history(&history, cfg.history);

        let model = fit_model(cfg, spec, window, warm.as_deref(), j)?;
        let p = match &model {
            Fitted::Io(m) => linearize_io(m, &u)?,
            Fitted::Is(m) => {
                let x1 = window
                    .last()
                    .and_then(TrialRecord::initial_state)
                    .ok_or_else(|| Error::invalid("state model needs measured states"))?;
                linearize_is(m, &u, &x1)?
            }
        };
        let p_norm = p.spectral_norm();
        let (next, reseeded) = match compute_weights(&p, cfg.variant) {
            Ok(weights) => {
                let gain = learning_gain(&p, &weights)?;
                (update_input(&u, &e, &gain)?, false)
            }
            Err(Error::DegenerateModel { .. }) => {
                let fresh = cfg
                    .init
                    .to_init_config(log.input_variance, derive_seed(cfg.seed, Stream::Reseed, j as u64));
                (initial_input(&r, &fresh, fs)?, true)
            }
            Err(other) => return Err(other),
        };
        let next = clip_input(&next, spec.input_bounds);
        let hyperparams = model.hyperparams();
        warm = Some(hyperparams.clone());
        let wall_s = if cfg.record_wall_time {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        log.entries.push(TrialEntry {
            j,
            err_norm: metrics.error_norm,
            rel_raw: metrics.relative_raw,
            eps: metrics.relative,
            wall_s,
            p_norm,
            hyperparams,
            reseeded,
            input: u.clone(),
            output,
        });
        log.final_input = Some(next.clone());
        u = next;

        let eps = log.eps();
        if cfg.early_stop && eps.len() >= 2 && eps[eps.len() - 1] == 0.0 && eps[eps.len() - 2] == 0.0 {
            log.status = CampaignStatus::EarlyStopped {
                reason: format!("relative error zero on trials {} and {j}", j - 1),
            };
            break;
        }
        if let Some(x) = cfg.stop_at_reduction {
            if j < cfg.trials && trials_to_reduction(&eps, x).is_some() {
                log.status = CampaignStatus::EarlyStopped {
                    reason: format!("relative error reduced by {x} at trial {j}"),
                };
                break;
            }
        }
    }
    Ok(())
}
