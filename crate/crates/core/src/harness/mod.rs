//! Learning campaigns: configuration, the trial loop, repeatability runs,
//! variant comparison, the task suite and on-disk persistence.

mod campaign;
mod config;
mod persist;
mod suite;

pub use campaign::{
    resolve_plant, run_learning, run_learning_with, run_repeatability, trials_to_reduction, CampaignLog, CampaignStatus,
    RepeatabilityResult, TrialEntry,
};
pub use config::{CampaignConfig, GpSettings, InitSettings, ReferenceSource, VarianceChoice};
pub use persist::{load_campaign, load_trials_csv, save_campaign, write_plotdata, TRIALS_HEADER};
pub use suite::{
    compare_variants, default_tasks, run_suite, summarize, CampaignSummary, SuiteConfig, SuiteReport, TaskSpec,
    VariantComparison, VariantStats,
};
