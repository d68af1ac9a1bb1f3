use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::campaign::{run_learning_with, resolve_plant, CampaignLog, CampaignStatus};
use super::config::{CampaignConfig, ReferenceSource};
use crate::error::Result;
use crate::ilc::Variant;
use crate::plant::PlantId;

/// One tracking task: a plant and the parameters of its generated reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub plant: PlantId,
    pub cutoff_hz: f64,
    pub input_variance: f64,
    pub samples: usize,
    pub reference_seed: u64,
}

/// Three references per testbed with cutoffs 0.5, 1 and 2 Hz.
pub fn default_tasks() -> Vec<TaskSpec> {
    let table: [(PlantId, [f64; 3]); 3] = [
        (PlantId::Cube, [0.02, 0.01, 0.005]),
        (PlantId::Twipr, [0.05, 0.03, 0.02]),
        (PlantId::Pendu, [0.02, 0.01, 0.005]),
    ];
    let mut tasks = Vec::new();
    for (plant, variances) in table {
        for (i, (cutoff_hz, input_variance)) in [0.5, 1.0, 2.0].into_iter().zip(variances).enumerate() {
            tasks.push(TaskSpec {
                name: format!("{}-{}", plant.as_str().to_ascii_lowercase(), i + 1),
                plant,
                cutoff_hz,
                input_variance,
                samples: 100,
                reference_seed: 1000 + 10 * tasks.len() as u64,
            });
        }
    }
    tasks
}

impl TaskSpec {
    /// Campaign config for this task; everything else is taken from `base`.
    pub fn campaign(&self, base: &CampaignConfig, variant: Variant, seed: u64) -> CampaignConfig {
        CampaignConfig {
            plant: self.plant,
            reference: ReferenceSource::Generate {
                cutoff_hz: self.cutoff_hz,
                input_variance: self.input_variance,
                samples: self.samples,
                seed: Some(self.reference_seed),
            },
            variant,
            seed,
            ..base.clone()
        }
    }
}

/// Compact result of one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub task: String,
    pub plant: PlantId,
    pub variant: Variant,
    pub seed: u64,
    pub trials: usize,
    pub trials_to_50: Option<usize>,
    pub trials_to_80: Option<usize>,
    pub eps: Vec<f64>,
    pub repetitive_floor: f64,
    pub status: CampaignStatus,
}

pub fn summarize(task: &str, log: &CampaignLog) -> CampaignSummary {
    CampaignSummary {
        task: task.to_string(),
        plant: log.plant.id,
        variant: log.config.variant,
        seed: log.config.seed,
        trials: log.config.trials,
        trials_to_50: log.trials_to(0.5),
        trials_to_80: log.trials_to(0.8),
        eps: log.eps(),
        repetitive_floor: log.repetitive_floor,
        status: log.status.clone(),
    }
}

impl CampaignSummary {
    /// Trials-to-X with "not reached" counted as one past the campaign length.
    pub fn counted(&self, fraction: f64) -> f64 {
        let value = if fraction == 0.5 {
            self.trials_to_50
        } else if fraction == 0.8 {
            self.trials_to_80
        } else {
            super::campaign::trials_to_reduction(&self.eps, fraction)
        };
        value.map_or(self.trials as f64 + 1.0, |v| v as f64)
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Aggregate trials-to-X statistics of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantStats {
    pub variant: Variant,
    pub campaigns: usize,
    pub mean_trials_to_50: f64,
    pub median_trials_to_50: f64,
    pub mean_trials_to_80: f64,
    pub median_trials_to_80: f64,
    pub not_reached_50: usize,
    pub not_reached_80: usize,
}

impl VariantStats {
    pub fn from_summaries(variant: Variant, runs: &[&CampaignSummary]) -> Self {
        let collect = |f: f64| runs.iter().map(|s| s.counted(f)).collect::<Vec<_>>();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let mut t50 = collect(0.5);
        let mut t80 = collect(0.8);
        Self {
            variant,
            campaigns: runs.len(),
            mean_trials_to_50: mean(&t50),
            mean_trials_to_80: mean(&t80),
            median_trials_to_50: median(&mut t50),
            median_trials_to_80: median(&mut t80),
            not_reached_50: runs.iter().filter(|s| s.trials_to_50.is_none()).count(),
            not_reached_80: runs.iter().filter(|s| s.trials_to_80.is_none()).count(),
        }
    }
}

/// IO and IS campaigns on the same plant, reference and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub io: CampaignSummary,
    pub is: CampaignSummary,
}

/// Run both variants from one config (the config's variant is ignored).
/// With an output directory, the campaigns land in `io/` and `is/` below it.
pub fn compare_variants(cfg: &CampaignConfig) -> Result<VariantComparison> {
    let spec = resolve_plant(cfg)?;
    let run = |variant: Variant| -> Result<CampaignSummary> {
        let c = CampaignConfig {
            variant,
            out: cfg.out.as_ref().map(|d| d.join(variant.as_str())),
            ..cfg.clone()
        };
        let log = run_learning_with(&c, &spec)?;
        Ok(summarize(&format!("{}", cfg.plant), &log))
    };
    Ok(VariantComparison {
        io: run(Variant::Io)?,
        is: run(Variant::Is)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub tasks: Vec<TaskSpec>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    /// Shared campaign settings (trials, history, GP and init settings).
    pub base: CampaignConfig,
    pub out: Option<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            tasks: default_tasks(),
            seeds: (0..5).collect(),
            variants: vec![Variant::Io, Variant::Is],
            base: CampaignConfig::default(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub campaigns: Vec<CampaignSummary>,
    pub stats: Vec<VariantStats>,
}

impl SuiteReport {
    pub fn from_campaigns(campaigns: Vec<CampaignSummary>, variants: &[Variant]) -> Self {
        let stats = variants
            .iter()
            .map(|v| {
                let runs: Vec<&CampaignSummary> = campaigns.iter().filter(|c| c.variant == *v).collect();
                VariantStats::from_summaries(*v, &runs)
            })
            .collect();
        Self { campaigns, stats }
    }

    pub fn stats_for(&self, variant: Variant) -> Option<&VariantStats> {
        self.stats.iter().find(|s| s.variant == variant)
    }

    /// Median over seeds of trials-to-X for one task and variant.
    pub fn task_median(&self, task: &str, variant: Variant, fraction: f64) -> f64 {
        let mut values: Vec<f64> = self
            .campaigns
            .iter()
            .filter(|c| c.task == task && c.variant == variant)
            .map(|c| c.counted(fraction))
            .collect();
        median(&mut values)
    }
}

/// Every task x variant x seed campaign, sequentially.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut campaigns = Vec::new();
    for task in &cfg.tasks {
        let spec = resolve_plant(&task.campaign(&cfg.base, Variant::Io, 0))?;
        for variant in &cfg.variants {
            for seed in &cfg.seeds {
                let mut c = task.campaign(&cfg.base, *variant, *seed);
                c.out = cfg
                    .out
                    .as_ref()
                    .map(|d| d.join(&task.name).join(variant.as_str()).join(format!("seed{seed}")));
                let log = run_learning_with(&c, &spec)?;
                campaigns.push(summarize(&task.name, &log));
            }
        }
    }
    let report = SuiteReport::from_campaigns(campaigns, &cfg.variants);
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(dir.join("suite.json"), json + "\n")?;
    }
    Ok(report)
}
