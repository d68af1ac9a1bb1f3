//! Norm-optimal input update with model-derived weights, and the autonomous
//! choice of the first input trajectory.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{spectral_norm, LiftedJacobian};
use crate::error::{Error, Result};
use crate::signal::{filtered_gaussian, significant_frequency, DEFAULT_POWER_THRESHOLD};

/// Which model the learning loop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Input/output model.
    Io,
    /// Input/state model.
    Is,
}

impl Variant {
    /// Factor `c` in `S = c |P|_2^2 I`.
    pub fn update_weight_factor(self) -> f64 {
        match self {
            Variant::Io => 1.0,
            Variant::Is => 0.1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Io => "io",
            Variant::Is => "is",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "io" => Ok(Variant::Io),
            "is" => Ok(Variant::Is),
            other => Err(Error::Config(format!("unknown variant {other:?}, expected io or is"))),
        }
    }
}

/// Error weighting `W` and update weighting `S` of the next-trial cost.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub w: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// `|P|_2` at or below `DEGENERATE_PER_SAMPLE * N` counts as a flat model.
pub const DEGENERATE_PER_SAMPLE: f64 = 1e-12;

pub fn compute_weights(p: &LiftedJacobian, variant: Variant) -> Result<WeightPair> {
    let m = p.matrix();
    if m.nrows() != m.ncols() {
        return Err(Error::invalid("lifted Jacobian must be square"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("lifted Jacobian has non-finite entries"));
    }
    let n = m.nrows();
    let norm = spectral_norm(m);
    let threshold = DEGENERATE_PER_SAMPLE * n as f64;
    if norm <= threshold {
        return Err(Error::DegenerateModel { norm, threshold });
    }
    let s = variant.update_weight_factor() * norm * norm;
    Ok(WeightPair {
        w: DMatrix::identity(n, n),
        s: DMatrix::from_diagonal_element(n, n, s),
    })
}

/// Trial-varying learning gain.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningGain(pub DMatrix<f64>);

impl LearningGain {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `L = (P^T W P + S)^-1 W P^T`.
pub fn learning_gain(p: &LiftedJacobian, weights: &WeightPair) -> Result<LearningGain> {
    let p = p.matrix();
    let n = p.nrows();
    if weights.w.shape() != (n, n) || weights.s.shape() != (n, n) || p.ncols() != n {
        return Err(Error::invalid("weights and Jacobian dimensions differ"));
    }
    let mut a = p.transpose() * &weights.w * p + &weights.s;
    a = (&a + a.transpose()) * 0.5;
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numerical("P^T W P + S is not positive definite"))?;
    let gain = chol.solve(&(&weights.w * p.transpose()));
    if gain.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("learning gain has non-finite entries"));
    }
    Ok(LearningGain(gain))
}

/// `u_next = u + L e`.
pub fn update_input(u: &DVector<f64>, e: &DVector<f64>, gain: &LearningGain) -> Result<DVector<f64>> {
    let l = gain.matrix();
    if u.len() != e.len() || l.shape() != (u.len(), e.len()) {
        return Err(Error::invalid(format!(
            "length mismatch: u {}, e {}, L {}x{}",
            u.len(),
            e.len(),
            l.nrows(),
            l.ncols()
        )));
    }
    Ok(u + l * e)
}

/// Elementwise clip to `[lo, hi]`.
pub fn clip_input(u: &DVector<f64>, bounds: Option<[f64; 2]>) -> DVector<f64> {
    match bounds {
        Some([lo, hi]) => u.map(|v| v.clamp(lo, hi)),
        None => u.clone(),
    }
}

/// Parameters of the first input trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// `sigma_I^2` of the Gaussian draw, input units squared.
    pub input_variance: f64,
    pub power_threshold: f64,
    /// Probe output must exceed this multiple of the noise std.
    pub excitation_factor: f64,
    pub seed: u64,
    /// First candidate of the automatic variance search.
    pub probe_start_variance: f64,
    pub max_doublings: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            input_variance: 1e-4,
            power_threshold: DEFAULT_POWER_THRESHOLD,
            excitation_factor: 3.0,
            seed: 0,
            probe_start_variance: 1e-4,
            max_doublings: 12,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_variance > 0.0 && self.input_variance.is_finite()) {
            return Err(Error::Config("input variance must be positive".into()));
        }
        if !(self.power_threshold > 0.0 && self.power_threshold < 1.0) {
            return Err(Error::Config("power threshold must lie in (0, 1)".into()));
        }
        if !(self.excitation_factor > 0.0) || !(self.probe_start_variance > 0.0) {
            return Err(Error::Config("excitation factor and probe variance must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian input band-limited to the significant frequency of `r`.
pub fn initial_input(r: &DVector<f64>, cfg: &InitConfig, fs: f64) -> Result<DVector<f64>> {
    initial_input_with_variance(r, cfg, fs, cfg.input_variance, cfg.seed)
}

pub(crate) fn initial_input_with_variance(
    r: &DVector<f64>,
    cfg: &InitConfig,
    fs: f64,
    variance: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    if !(fs > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    if r.iter().all(|v| *v == 0.0) {
        return Err(Error::invalid("reference is zero; no frequency content to match"));
    }
    let f0 = significant_frequency(r, fs, cfg.power_threshold)?;
    // at or above Nyquist the filter passes every bin
    let cutoff = f0.max(fs / r.len() as f64).min(fs / 2.0 * (1.0 - 1e-9));
    filtered_gaussian(r.len(), variance, cutoff, fs, seed)
}

fn population_std(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Double the input variance until a probe trial's output rises clearly above
/// the noise floor `sigma_y`.
pub fn auto_input_variance<F>(
    r: &DVector<f64>,
    fs: f64,
    mut probe: F,
    noise_floor: f64,
    cfg: &InitConfig,
) -> Result<f64>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(noise_floor >= 0.0) {
        return Err(Error::invalid("noise floor must be nonnegative"));
    }
    let required = cfg.excitation_factor * noise_floor;
    let mut variance = cfg.probe_start_variance;
    let mut last_std = 0.0;
    for _ in 0..=cfg.max_doublings {
        let u = initial_input_with_variance(r, cfg, fs, variance, cfg.seed)?;
        let y = probe(&u)?;
        last_std = population_std(&y);
        if last_std >= required && last_std > 0.0 {
            return Ok(variance);
        }
        variance *= 2.0;
    }
    Err(Error::ActuationIneffective {
        output_std: last_std,
        required,
        doublings: cfg.max_doublings,
    })
}
