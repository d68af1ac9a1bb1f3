//! Simulated testbeds and the linear oracle plant.
//!
//! Every plant starts a trial at rest in the zero state, holds the input
//! constant over each sample period, and integrates its ODE with classical
//! RK4 on a finer substep grid. The linear plant is propagated with its exact
//! zero-order-hold discretization instead, which makes its lifted matrix an
//! exact oracle.

mod catalog;
mod lqr;
mod models;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use catalog::PlantCatalog;
pub use lqr::{discrete_lqr, linearize_at_rest, zoh_discretize};
pub use models::{plant_dynamics, Physics};

use crate::dynamics::TrialRecord;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PlantId {
    Cube,
    Twipr,
    Pendu,
    Linear,
}

impl PlantId {
    pub const TESTBEDS: [PlantId; 3] = [PlantId::Cube, PlantId::Twipr, PlantId::Pendu];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlantId::Cube => "CUBE",
            PlantId::Twipr => "TWIPR",
            PlantId::Pendu => "PENDU",
            PlantId::Linear => "LINEAR",
        }
    }
}

impl std::fmt::Display for PlantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PlantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CUBE" => Ok(PlantId::Cube),
            "TWIPR" => Ok(PlantId::Twipr),
            "PENDU" => Ok(PlantId::Pendu),
            "LINEAR" => Ok(PlantId::Linear),
            other => Err(Error::Config(format!("unknown plant id {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub id: PlantId,
    /// Sample rate in Hz.
    pub fs: f64,
    /// Integration substeps per sample period.
    pub substeps: usize,
    pub output_row: Vec<f64>,
    pub physics: Physics,
    /// Elementwise clip `[min, max]` on the total actuation, N·m.
    pub input_bounds: Option<[f64; 2]>,
    /// Std of additive Gaussian noise on the recorded output.
    pub output_noise_std: f64,
    /// Std of additive Gaussian noise on the recorded state.
    pub state_noise_std: f64,
    /// Stabilizing state feedback `u_total = u - k^T x` (TWIPR).
    pub feedback_gain: Option<Vec<f64>>,
    /// A trial aborts once any state magnitude exceeds this bound.
    pub divergence_bound: f64,
}

impl PlantSpec {
    pub fn state_dim(&self) -> usize {
        self.physics.state_dim()
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.state_dim();
        if self.output_row.len() != m {
            return Err(Error::Config(format!(
                "{}: output row has {} entries, state has {m}",
                self.id,
                self.output_row.len()
            )));
        }
        if !(self.fs > 0.0) || self.substeps == 0 {
            return Err(Error::Config(format!("{}: fs and substeps must be positive", self.id)));
        }
        if let Some(k) = &self.feedback_gain {
            if k.len() != m {
                return Err(Error::Config(format!("{}: feedback gain length {} != {m}", self.id, k.len())));
            }
        }
        if let Some([lo, hi]) = self.input_bounds {
            if !(lo < hi) {
                return Err(Error::Config(format!("{}: empty input bounds", self.id)));
            }
        }
        if self.output_noise_std < 0.0 || self.state_noise_std < 0.0 || !(self.divergence_bound > 0.0) {
            return Err(Error::Config(format!("{}: invalid noise or divergence settings", self.id)));
        }
        self.physics.validate()
    }

    pub fn output(&self, x: &DVector<f64>) -> f64 {
        self.output_row.iter().zip(x.iter()).map(|(c, v)| c * v).sum()
    }

    /// Same plant with noise disabled.
    pub fn noiseless(&self) -> Self {
        Self {
            output_noise_std: 0.0,
            state_noise_std: 0.0,
            ..self.clone()
        }
    }
}

/// One simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrialResult {
    /// Measured data (noise added if enabled); state always recorded.
    pub record: TrialRecord,
    /// Total actuation after feedback and saturation.
    pub applied_input: DVector<f64>,
    /// Noise-free output `C x(n)`.
    pub clean_output: DVector<f64>,
}

/// Classical RK4 step with the input held constant.
pub fn rk4_step<F>(derivative: F, x: &DVector<f64>, u: f64, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    let k1 = derivative(x, u);
    let k2 = derivative(&(x + &k1 * (0.5 * dt)), u);
    let k3 = derivative(&(x + &k2 * (0.5 * dt)), u);
    let k4 = derivative(&(x + &k3 * dt), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            sample: 0,
            reason: "non-finite RK4 step".into(),
        });
    }
    Ok(next)
}

/// Run one trial from rest.
pub fn run_trial(spec: &PlantSpec, u: &DVector<f64>, seed: u64, noise_on: bool) -> Result<SimTrialResult> {
    let x0 = DVector::zeros(spec.state_dim());
    run_trial_from(spec, u, &x0, seed, noise_on)
}

/// Run one trial from an arbitrary initial state.
pub fn run_trial_from(
    spec: &PlantSpec,
    u: &DVector<f64>,
    x0: &DVector<f64>,
    seed: u64,
    noise_on: bool,
) -> Result<SimTrialResult> {
    spec.validate()?;
    let m = spec.state_dim();
    let n = u.len();
    if n == 0 {
        return Err(Error::invalid("input trajectory is empty"));
    }
    if x0.len() != m {
        return Err(Error::invalid(format!("initial state has {} entries, plant has {m}", x0.len())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("input trajectory contains non-finite values"));
    }

    let exact = match &spec.physics {
        Physics::Linear { .. } => Some(linear_discretization(spec)?),
        _ => None,
    };
    let dt = spec.sample_period() / spec.substeps as f64;

    let mut states = DMatrix::zeros(m, n);
    let mut applied = DVector::zeros(n);
    let mut x = x0.clone();
    for k in 0..n {
        states.set_column(k, &x);
        let mut total = u[k];
        if let Some(gain) = &spec.feedback_gain {
            total -= gain.iter().zip(x.iter()).map(|(g, v)| g * v).sum::<f64>();
        }
        if let Some([lo, hi]) = spec.input_bounds {
            total = total.clamp(lo, hi);
        }
        applied[k] = total;
        if k + 1 == n {
            break;
        }
        x = match &exact {
            Some((ad, bd)) => ad * &x + bd * total,
            None => {
                let mut xs = x;
                for _ in 0..spec.substeps {
                    xs = rk4_step(|s, v| plant_dynamics(&spec.physics, s, v), &xs, total, dt)
                        .map_err(|_| Error::Divergence {
                            sample: k + 2,
                            reason: "non-finite state".into(),
                        })?;
                }
                xs
            }
        };
        let peak = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !peak.is_finite() || peak > spec.divergence_bound {
            return Err(Error::Divergence {
                sample: k + 2,
                reason: format!("|x|_inf = {peak:e} exceeds {:e}", spec.divergence_bound),
            });
        }
    }

    let clean_output = DVector::from_fn(n, |k, _| spec.output(&states.column(k).into_owned()));
    let mut output = clean_output.clone();
    let mut measured_states = states;
    if noise_on {
        let mut rng = rng_from_seed(seed);
        if spec.output_noise_std > 0.0 {
            for y in output.iter_mut() {
                *y += spec.output_noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if spec.state_noise_std > 0.0 {
            for v in measured_states.iter_mut() {
                *v += spec.state_noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let record = TrialRecord::new(0, u.clone(), output, Some(measured_states))?;
    Ok(SimTrialResult {
        record,
        applied_input: applied,
        clean_output,
    })
}

/// Exact sampled-data model `(A_d, B_d)` of the linear plant.
pub fn linear_discretization(spec: &PlantSpec) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let Physics::Linear { a, b } = &spec.physics else {
        return Err(Error::invalid(format!("{} is not the linear plant", spec.id)));
    };
    Ok(zoh_discretize(
        &models::matrix_from_rows(a)?,
        &DVector::from_column_slice(b),
        spec.sample_period(),
    ))
}

/// Lifted input-to-output matrix of the linear plant over `n` samples.
pub fn lifted_matrix_linear(spec: &PlantSpec, n: usize) -> Result<DMatrix<f64>> {
    let (ad, bd) = linear_discretization(spec)?;
    let c = DVector::from_column_slice(&spec.output_row);
    // markov[k] = C A^k B
    let mut markov = Vec::with_capacity(n);
    let mut v = bd;
    for _ in 0..n {
        markov.push(c.dot(&v));
        v = &ad * v;
    }
    Ok(DMatrix::from_fn(n, n, |row, col| {
        if col < row {
            markov[row - col - 1]
        } else {
            0.0
        }
    }))
}

#[cfg(test)]
mod tests;
