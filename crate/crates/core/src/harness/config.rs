use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::IoRegressor;
use crate::error::{Error, Result};
use crate::gp::FitConfig;
use crate::ilc::{InitConfig, Variant};
use crate::plant::PlantId;
use crate::table::read_text;

/// Where the reference comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSource {
    /// Realize a filtered random input on the (noise-free) plant.
    Generate {
        cutoff_hz: f64,
        input_variance: f64,
        samples: usize,
        /// Defaults to a seed derived from the campaign master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

impl Default for ReferenceSource {
    fn default() -> Self {
        ReferenceSource::Generate {
            cutoff_hz: 1.0,
            input_variance: 0.01,
            samples: 100,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// Input variance of the first trial: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarianceChoice {
    Fixed(f64),
    Auto(AutoTag),
}

impl VarianceChoice {
    pub const AUTO: VarianceChoice = VarianceChoice::Auto(AutoTag::Auto);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSettings {
    pub variance: VarianceChoice,
    pub power_threshold: f64,
    pub excitation_factor: f64,
    pub probe_start_variance: f64,
    pub max_doublings: usize,
}

impl Default for InitSettings {
    fn default() -> Self {
        let base = InitConfig::default();
        Self {
            variance: VarianceChoice::AUTO,
            power_threshold: base.power_threshold,
            excitation_factor: base.excitation_factor,
            probe_start_variance: base.probe_start_variance,
            max_doublings: base.max_doublings,
        }
    }
}

impl InitSettings {
    pub(crate) fn to_init_config(&self, variance: f64, seed: u64) -> InitConfig {
        InitConfig {
            input_variance: variance,
            power_threshold: self.power_threshold,
            excitation_factor: self.excitation_factor,
            seed,
            probe_start_variance: self.probe_start_variance,
            max_doublings: self.max_doublings,
        }
    }
}

/// Evidence-maximization settings shared by every fit of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        let base = FitConfig::default();
        Self {
            starts: base.starts,
            max_iter: base.max_iter,
            grad_tol: base.grad_tol,
        }
    }
}

impl GpSettings {
    pub(crate) fn to_fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            starts: self.starts,
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            seed,
            ..FitConfig::default()
        }
    }
}

/// Everything a campaign depends on. A campaign is a pure function of this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub plant: PlantId,
    /// Plant parameter file; the built-in parameters when absent.
    pub plant_file: Option<PathBuf>,
    pub reference: ReferenceSource,
    pub variant: Variant,
    pub trials: usize,
    /// Number of most recent trials the model is trained on.
    pub history: usize,
    pub init: InitSettings,
    pub gp: GpSettings,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub io_regressor: IoRegressor,
    /// Replays of the realizing input used to estimate the repetitive error.
    pub repeat_runs: usize,
    /// Used when the reference carries no realizing input.
    pub repetitive_floor: Option<f64>,
    /// Stop once the relative error has been zero on two consecutive trials.
    pub early_stop: bool,
    /// Stop once the relative error has dropped by this fraction of trial 1.
    pub stop_at_reduction: Option<f64>,
    /// Measure per-trial wall time; off keeps the per-trial CSV reproducible.
    pub record_wall_time: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            plant: PlantId::Linear,
            plant_file: None,
            reference: ReferenceSource::default(),
            variant: Variant::Io,
            trials: 15,
            history: 3,
            init: InitSettings::default(),
            gp: GpSettings::default(),
            seed: 0,
            out: None,
            io_regressor: IoRegressor::default(),
            repeat_runs: 10,
            repetitive_floor: None,
            early_stop: false,
            stop_at_reduction: None,
            record_wall_time: false,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.history == 0 {
            return fail("history must be at least 1");
        }
        if self.repeat_runs == 0 {
            return fail("repeat_runs must be at least 1");
        }
        if self.gp.starts == 0 && self.gp.max_iter == 0 {
            return fail("GP fitting needs at least one start");
        }
        if let VarianceChoice::Fixed(v) = self.init.variance {
            if !(v > 0.0 && v.is_finite()) {
                return fail("initial input variance must be positive");
            }
        }
        if !(self.init.power_threshold > 0.0 && self.init.power_threshold < 1.0) {
            return fail("power threshold must lie in (0, 1)");
        }
        if let Some(f) = self.repetitive_floor {
            if !(f >= 0.0) {
                return fail("repetitive floor must be nonnegative");
            }
        }
        if let Some(x) = self.stop_at_reduction {
            if !(x > 0.0 && x < 1.0) {
                return fail("stop_at_reduction must lie in (0, 1)");
            }
        }
        if let ReferenceSource::Generate {
            cutoff_hz,
            input_variance,
            samples,
            ..
        } = &self.reference
        {
            if *samples < 2 {
                return fail("reference needs at least two samples");
            }
            if !(*cutoff_hz > 0.0) || !(*input_variance >= 0.0) {
                return fail("reference cutoff must be positive and variance nonnegative");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
