//! Spectral utilities, tracking-error metrics and reference generation.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{run_trial, PlantId, PlantSpec};
use crate::seed::rng_from_seed;
use crate::table::{fmt_f64, parse_numeric, read_text};

pub const DEFAULT_POWER_THRESHOLD: f64 = 0.99;

/// Where a reference came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Generated {
        plant: PlantId,
        seed: u64,
        cutoff_hz: f64,
        input_variance: f64,
    },
    Loaded {
        path: PathBuf,
    },
}

/// Desired output trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub r: DVector<f64>,
    pub fs: f64,
    pub provenance: Provenance,
    pub realizing_input: Option<DVector<f64>>,
}

impl Reference {
    pub fn new(
        r: DVector<f64>,
        fs: f64,
        provenance: Provenance,
        realizing_input: Option<DVector<f64>>,
    ) -> Result<Self> {
        if r.len() < 2 {
            return Err(Error::invalid("reference needs at least two samples"));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reference contains non-finite values"));
        }
        if let Some(u) = &realizing_input {
            if u.len() != r.len() {
                return Err(Error::invalid("realizing input length differs from reference"));
            }
        } else if matches!(provenance, Provenance::Generated { .. }) {
            return Err(Error::invalid("generated reference must carry its realizing input"));
        }
        Ok(Self {
            r,
            fs,
            provenance,
            realizing_input,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.r.norm()
    }
}

/// Tracking-error summary of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub error_norm: f64,
    pub relative_raw: f64,
    /// `max(relative_raw - repetitive_floor, 0)`.
    pub relative: f64,
    pub repetitive_floor: f64,
}

fn check_len(a: &DVector<f64>, b: &DVector<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// `e = r - y`.
pub fn error_trajectory(r: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(r, y)?;
    Ok(r - y)
}

fn reference_norm(r: &DVector<f64>) -> Result<f64> {
    let n = r.norm();
    if !(n > 0.0) {
        return Err(Error::invalid("reference has zero norm"));
    }
    Ok(n)
}

pub fn relative_error(e: &DVector<f64>, r: &DVector<f64>, repetitive_floor: f64) -> Result<ErrorMetrics> {
    check_len(e, r)?;
    if !(repetitive_floor >= 0.0) {
        return Err(Error::invalid("repetitive error floor must be nonnegative"));
    }
    let error_norm = e.norm();
    let relative_raw = error_norm / reference_norm(r)?;
    Ok(ErrorMetrics {
        error_norm,
        relative_raw,
        relative: (relative_raw - repetitive_floor).max(0.0),
        repetitive_floor,
    })
}

/// Largest relative deviation among repeated runs of the same input.
pub fn max_repetitive_error(outputs: &[DVector<f64>], r: &DVector<f64>) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::invalid("at least one run is required"));
    }
    let rn = reference_norm(r)?;
    let mut worst = 0.0f64;
    for y in outputs {
        check_len(y, r)?;
        worst = worst.max((r - y).norm() / rn);
    }
    Ok(worst)
}

fn fft(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Smallest frequency whose cumulative one-sided periodogram power of the
/// mean-removed signal reaches `power_threshold` of the total.
pub fn significant_frequency(r: &DVector<f64>, fs: f64, power_threshold: f64) -> Result<f64> {
    if !(power_threshold > 0.0 && power_threshold < 1.0) {
        return Err(Error::invalid("power threshold must lie in (0, 1)"));
    }
    if !(fs > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let n = r.len();
    if n < 2 {
        return Err(Error::invalid("signal needs at least two samples"));
    }
    let mean = r.mean();
    let centered: Vec<f64> = r.iter().map(|v| v - mean).collect();
    let spectrum = fft(&centered);
    let half = n / 2;
    let power: Vec<f64> = (0..=half)
        .map(|k| {
            let p = spectrum[k].norm_sqr();
            // interior bins stand for both signs of frequency
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let spread = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::invalid("signal is constant"));
    }
    let total: f64 = power.iter().sum();
    let mut acc = 0.0;
    for (k, p) in power.iter().enumerate() {
        acc += p;
        if acc >= power_threshold * total {
            return Ok(k as f64 * fs / n as f64);
        }
    }
    Ok(half as f64 * fs / n as f64)
}

/// Brickwall low-pass in the frequency domain: bins strictly above `cutoff_hz` are zeroed.
pub fn zero_phase_lowpass(x: &DVector<f64>, cutoff_hz: f64, fs: f64) -> Result<DVector<f64>> {
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz outside (0, {}) Hz",
            fs / 2.0
        )));
    }
    let n = x.len();
    if n == 0 {
        return Ok(x.clone());
    }
    let mut spectrum = fft(x.as_slice());
    for (k, bin) in spectrum.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f > cutoff_hz {
            *bin = Complex::new(0.0, 0.0);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    Ok(DVector::from_iterator(n, spectrum.iter().map(|c| c.re / n as f64)))
}

/// Seeded, low-pass filtered Gaussian input trajectory.
pub fn filtered_gaussian(n: usize, variance: f64, cutoff_hz: f64, fs: f64, seed: u64) -> Result<DVector<f64>> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::invalid("variance must be nonnegative"));
    }
    let mut rng = rng_from_seed(seed);
    let std = variance.sqrt();
    let raw = DVector::from_fn(n, |_, _| std * rng.sample::<f64, _>(StandardNormal));
    zero_phase_lowpass(&raw, cutoff_hz, fs)
}

/// Reference realized by one noise-free trial of a filtered random input.
pub fn generate_reference(
    plant: &PlantSpec,
    seed: u64,
    cutoff_hz: f64,
    input_variance: f64,
    n: usize,
) -> Result<Reference> {
    if n < 2 {
        return Err(Error::invalid("reference needs at least two samples"));
    }
    let u = filtered_gaussian(n, input_variance, cutoff_hz, plant.fs, seed)?;
    let sim = run_trial(plant, &u, 0, false).map_err(|e| match e {
        Error::Divergence { sample, reason } => {
            Error::GenerationFailed(format!("{} diverged at sample {sample}: {reason}", plant.id))
        }
        other => other,
    })?;
    if sim.clean_output.iter().any(|v| !v.is_finite()) {
        return Err(Error::GenerationFailed(format!("{} produced non-finite output", plant.id)));
    }
    Reference::new(
        sim.clean_output,
        plant.fs,
        Provenance::Generated {
            plant: plant.id,
            seed,
            cutoff_hz,
            input_variance,
        },
        Some(u),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    fs: f64,
    plant: Option<PlantId>,
    seed: Option<u64>,
    cutoff_hz: Option<f64>,
    input_variance: Option<f64>,
}

pub const REFERENCE_HEADER: [&str; 3] = ["n", "r", "u_realizing"];

/// Sidecar path next to a reference CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `n,r,u_realizing` rows and the JSON sidecar.
pub fn save_reference(reference: &Reference, csv_path: &Path) -> Result<()> {
    let mut out = REFERENCE_HEADER.join(",");
    out.push('\n');
    for k in 0..reference.len() {
        let u = reference
            .realizing_input
            .as_ref()
            .map(|u| fmt_f64(u[k]))
            .unwrap_or_default();
        out.push_str(&format!("{k},{},{u}\n", fmt_f64(reference.r[k])));
    }
    std::fs::write(csv_path, out)?;
    let sidecar = match &reference.provenance {
        Provenance::Generated {
            plant,
            seed,
            cutoff_hz,
            input_variance,
        } => Sidecar {
            fs: reference.fs,
            plant: Some(*plant),
            seed: Some(*seed),
            cutoff_hz: Some(*cutoff_hz),
            input_variance: Some(*input_variance),
        },
        Provenance::Loaded { .. } => Sidecar {
            fs: reference.fs,
            plant: None,
            seed: None,
            cutoff_hz: None,
            input_variance: None,
        },
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(sidecar_path(csv_path), json + "\n")?;
    Ok(())
}

/// Load a reference CSV and its sidecar.
pub fn load_reference(csv_path: &Path) -> Result<Reference> {
    let text = read_text(csv_path)?;
    let rows = parse_numeric(csv_path, &text, &REFERENCE_HEADER, &[2])?;
    for (i, row) in rows.iter().enumerate() {
        if row[0] != i as f64 {
            return Err(Error::Parse {
                path: csv_path.to_path_buf(),
                line: i as u64 + 2,
                message: format!("sample index {} out of sequence", row[0]),
            });
        }
    }
    let side_path = sidecar_path(csv_path);
    let side_text = read_text(&side_path)?;
    let side: Sidecar = serde_json::from_str(&side_text).map_err(|e| Error::Parse {
        path: side_path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let r = DVector::from_iterator(rows.len(), rows.iter().map(|row| row[1]));
    let has_input = !rows.is_empty() && rows.iter().all(|row| !row[2].is_nan());
    let realizing_input = has_input.then(|| DVector::from_iterator(rows.len(), rows.iter().map(|row| row[2])));
    let provenance = match (side.plant, side.seed, side.cutoff_hz, side.input_variance) {
        (Some(plant), Some(seed), Some(cutoff_hz), Some(input_variance)) if has_input => Provenance::Generated {
            plant,
            seed,
            cutoff_hz,
            input_variance,
        },
        _ => Provenance::Loaded {
            path: csv_path.to_path_buf(),
        },
    };
    Reference::new(r, side.fs, provenance, realizing_input)
}

#[cfg(test)]
mod tests;
