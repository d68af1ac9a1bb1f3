//! Plant models learned from trial data.
//!
//! Two variants are provided. The input/output model regresses each output
//! sample on the (reversed, zero-padded) history of inputs with one shared
//! length scale, giving a direct approximation of the lifted map `u -> y`.
//! The input/state model learns one GP per state dimension that predicts the
//! next state from the current state and input, and produces trajectories by
//! rolling that one-step model forward.
//!
//! Both expose the prediction `y_hat(u)` and its Jacobian `dy_hat/du`, which
//! the ILC update uses as the lifted plant linearization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{gp_fit, FitConfig, GpDataset, GpModel, KernelKind, KernelParams};

/// One executed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub index: usize,
    pub input: DVector<f64>,
    pub output: DVector<f64>,
    /// `M x N`, column `n` is the measured state at sample `n`.
    pub state: Option<DMatrix<f64>>,
}

impl TrialRecord {
    pub fn new(
        index: usize,
        input: DVector<f64>,
        output: DVector<f64>,
        state: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if input.len() != output.len() {
            return Err(Error::invalid(format!(
                "input has {} samples, output has {}",
                input.len(),
                output.len()
            )));
        }
        if input.is_empty() {
            return Err(Error::invalid("trial must contain samples"));
        }
        if let Some(x) = &state {
            if x.ncols() != input.len() {
                return Err(Error::invalid(format!(
                    "state has {} columns, trial has {} samples",
                    x.ncols(),
                    input.len()
                )));
            }
        }
        Ok(Self {
            index,
            input,
            output,
            state,
        })
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn initial_state(&self) -> Option<DVector<f64>> {
        self.state.as_ref().map(|x| x.column(0).into_owned())
    }
}

/// Keep the `h` most recent trials. Trials are expected in index order.
pub fn truncate_history(trials: &[TrialRecord], h: usize) -> &[TrialRecord] {
    &trials[trials.len().saturating_sub(h)..]
}

/// Lifted sensitivity `P(n, m) = d y_hat(n) / d u(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedJacobian(pub DMatrix<f64>);

impl LiftedJacobian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn horizon(&self) -> usize {
        self.0.nrows()
    }

    /// Induced 2-norm.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.0)
    }
}

pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, s| a.max(*s))
}

fn check_horizon(trials: &[TrialRecord]) -> Result<usize> {
    let first = trials
        .first()
        .ok_or_else(|| Error::invalid("at least one trial is required"))?;
    let n = first.len();
    if let Some(t) = trials.iter().find(|t| t.len() != n) {
        return Err(Error::invalid(format!(
            "trial {} has {} samples, expected {n}",
            t.index,
            t.len()
        )));
    }
    Ok(n)
}

// ---------------------------------------------------------------------------
// Input/output model

/// Which inputs enter the regression vector of output sample `n`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoRegressor {
    /// `[u(n-1), ..., u(1), 0, ..., 0]`: strictly causal.
    #[default]
    Previous,
    /// `[u(n), ..., u(1), 0, ..., 0]`.
    CurrentAndPrevious,
}

impl IoRegressor {
    /// Number of inputs visible to output sample `n` (0-based).
    fn visible(self, n: usize) -> usize {
        match self {
            IoRegressor::Previous => n,
            IoRegressor::CurrentAndPrevious => n + 1,
        }
    }

    fn fill(self, u: &DVector<f64>, n: usize, scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let top = self.visible(n);
        for (i, slot) in out.iter_mut().take(top).enumerate() {
            *slot = u[top - 1 - i] * scale;
        }
    }
}

/// Regression matrix (`N x N`, one column per output sample) for an input trajectory.
pub fn io_regressors(u: &DVector<f64>, mode: IoRegressor, scale: f64) -> DMatrix<f64> {
    let n = u.len();
    let mut q = DMatrix::zeros(n, n);
    for k in 0..n {
        mode.fill(u, k, scale, q.column_mut(k).as_mut_slice());
    }
    q
}

pub fn build_io_dataset(trials: &[TrialRecord]) -> Result<GpDataset> {
    build_io_dataset_with(trials, IoRegressor::Previous, 1.0)
}

/// Stack the regressors of all trials (trial order, then sample order).
pub fn build_io_dataset_with(trials: &[TrialRecord], mode: IoRegressor, scale: f64) -> Result<GpDataset> {
    let n = check_horizon(trials)?;
    let k = trials.len() * n;
    let mut design = DMatrix::zeros(n, k);
    let mut targets = DVector::zeros(k);
    for (t, trial) in trials.iter().enumerate() {
        let q = io_regressors(&trial.input, mode, scale);
        design.columns_mut(t * n, n).copy_from(&q);
        targets.rows_mut(t * n, n).copy_from(&trial.output);
    }
    GpDataset::new(design, targets)
}

/// GP approximation of the lifted dynamics.
#[derive(Debug, Clone)]
pub struct IoModel {
    gp: GpModel,
    horizon: usize,
    /// Multiplier applied to inputs before they enter a regression vector.
    input_scale: f64,
    mode: IoRegressor,
}

fn input_scale(trials: &[TrialRecord]) -> f64 {
    let all: Vec<f64> = trials.iter().flat_map(|t| t.input.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / all.len() as f64;
    let std = var.sqrt();
    if std > 1e-12 && std.is_finite() {
        1.0 / std
    } else {
        1.0
    }
}

impl IoModel {
    /// Fit by evidence maximization.
    pub fn fit(trials: &[TrialRecord], mode: IoRegressor, cfg: &FitConfig) -> Result<Self> {
        let scale = input_scale(trials);
        let dataset = build_io_dataset_with(trials, mode, scale)?;
        let horizon = dataset.dim();
        let gp = gp_fit(dataset, KernelKind::Shared, cfg)?;
        Ok(Self {
            gp,
            horizon,
            input_scale: scale,
            mode,
        })
    }

    /// Condition on the trials with fixed hyperparameters.
    pub fn with_params(trials: &[TrialRecord], mode: IoRegressor, params: KernelParams) -> Result<Self> {
        let scale = input_scale(trials);
        let dataset = build_io_dataset_with(trials, mode, scale)?;
        let horizon = dataset.dim();
        let gp = GpModel::from_params(dataset, params, KernelKind::Shared)?;
        Ok(Self {
            gp,
            horizon,
            input_scale: scale,
            mode,
        })
    }

    pub fn gp(&self) -> &GpModel {
        &self.gp
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn mode(&self) -> IoRegressor {
        self.mode
    }

    fn check(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.horizon {
            return Err(Error::invalid(format!(
                "input has {} samples, model horizon is {}",
                u.len(),
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Predicted output trajectory `y_hat(u)`.
pub fn io_predict(model: &IoModel, u: &DVector<f64>) -> Result<DVector<f64>> {
    model.check(u)?;
    let q = io_regressors(u, model.mode, model.input_scale);
    model.gp.predict_mean(&q)
}

/// Analytic Jacobian of [`io_predict`] at `u`.
pub fn linearize_io(model: &IoModel, u: &DVector<f64>) -> Result<LiftedJacobian> {
    model.check(u)?;
    let n = model.horizon;
    let q = io_regressors(u, model.mode, model.input_scale);
    let gp = &model.gp;
    let design = gp.dataset().design();
    // weights w(n, k) = alpha_k k(q_n, v_k)
    let mut w = gp.cross_kernel(&q)?;
    for (k, a) in gp.alpha().iter().enumerate() {
        w.column_mut(k).scale_mut(*a);
    }
    let row_sums: Vec<f64> = (0..n).map(|r| w.row(r).sum()).collect();
    // g(:, n) = sum_k w(n, k) v_k
    let g = design * w.transpose();
    let inv_sq = gp.inverse_sq_scales()[0];
    let c = -gp.dataset().target_scale() * inv_sq * model.input_scale;
    let mut p = DMatrix::zeros(n, n);
    for row in 0..n {
        let top = model.mode.visible(row);
        for col in 0..top {
            let i = top - 1 - col;
            p[(row, col)] = c * (q[(i, row)] * row_sums[row] - g[(i, row)]);
        }
    }
    Ok(LiftedJacobian(p))
}

// ---------------------------------------------------------------------------
// Input/state model

/// Per-dimension datasets `x(n+1)_m ~ [x(n); u(n)]` for `n` in `1..N-1`.
pub fn build_is_dataset(trials: &[TrialRecord]) -> Result<Vec<GpDataset>> {
    let n = check_horizon(trials)?;
    let mut m = None;
    for t in trials {
        let x = t
            .state
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("trial {} has no state data", t.index)))?;
        match m {
            None => m = Some(x.nrows()),
            Some(prev) if prev != x.nrows() => {
                return Err(Error::invalid("trials have different state dimensions"))
            }
            _ => {}
        }
    }
    let m = m.unwrap_or(0);
    if n < 2 {
        return Err(Error::invalid("state model needs trials with at least two samples"));
    }
    let per = n - 1;
    let k = trials.len() * per;
    let mut design = DMatrix::zeros(m + 1, k);
    let mut targets = DMatrix::zeros(m, k);
    for (t, trial) in trials.iter().enumerate() {
        let x = trial.state.as_ref().expect("checked above");
        for s in 0..per {
            let col = t * per + s;
            design.view_mut((0, col), (m, 1)).copy_from(&x.column(s));
            design[(m, col)] = trial.input[s];
            targets.column_mut(col).copy_from(&x.column(s + 1));
        }
    }
    (0..m)
        .map(|dim| GpDataset::new(design.clone(), targets.row(dim).transpose()))
        .collect()
}

/// A one-step state transition model with Jacobians.
pub trait StepModel {
    fn state_dim(&self) -> usize;

    /// Next state and `(d next / d x, d next / d u)`.
    fn step_with_jacobian(
        &self,
        x: &DVector<f64>,
        u: f64,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)>;

    fn step(&self, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        self.step_with_jacobian(x, u).map(|(next, _, _)| next)
    }
}

/// Exact linear transition `x+ = A x + b u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStep {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl StepModel for LinearStep {
    fn state_dim(&self) -> usize {
        self.b.len()
    }

    fn step_with_jacobian(
        &self,
        x: &DVector<f64>,
        u: f64,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        Ok((&self.a * x + &self.b * u, self.a.clone(), self.b.clone()))
    }
}

/// One GP per state dimension over `[x; u]`.
#[derive(Debug, Clone)]
pub struct IsModel {
    gps: Vec<GpModel>,
    output_row: Vec<f64>,
    horizon: usize,
}

impl IsModel {
    /// Fit each per-dimension GP; `warm` optionally seeds each fit with a previous optimum.
    pub fn fit(
        trials: &[TrialRecord],
        output_row: &[f64],
        cfg: &FitConfig,
        warm: Option<&[KernelParams]>,
    ) -> Result<Self> {
        let horizon = check_horizon(trials)?;
        let datasets = build_is_dataset(trials)?;
        if datasets.len() != output_row.len() {
            return Err(Error::invalid(format!(
                "output row has {} entries, state has {}",
                output_row.len(),
                datasets.len()
            )));
        }
        let gps = datasets
            .into_iter()
            .enumerate()
            .map(|(dim, ds)| {
                let cfg = FitConfig {
                    seed: cfg.seed ^ (dim as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    warm_start: warm.and_then(|w| w.get(dim).cloned()),
                    ..cfg.clone()
                };
                gp_fit(ds, KernelKind::Ard, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gps,
            output_row: output_row.to_vec(),
            horizon,
        })
    }

    /// Condition each GP with fixed hyperparameters (one entry per state dimension).
    pub fn with_params(trials: &[TrialRecord], output_row: &[f64], params: &[KernelParams]) -> Result<Self> {
        let horizon = check_horizon(trials)?;
        let datasets = build_is_dataset(trials)?;
        if datasets.len() != output_row.len() || params.len() != datasets.len() {
            return Err(Error::invalid("one output weight and parameter set per state dimension required"));
        }
        let gps = datasets
            .into_iter()
            .zip(params)
            .map(|(ds, p)| GpModel::from_params(ds, p.clone(), KernelKind::Ard))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gps,
            output_row: output_row.to_vec(),
            horizon,
        })
    }

    pub fn gps(&self) -> &[GpModel] {
        &self.gps
    }

    pub fn output_row(&self) -> &[f64] {
        &self.output_row
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

impl StepModel for IsModel {
    fn state_dim(&self) -> usize {
        self.gps.len()
    }

    fn step_with_jacobian(
        &self,
        x: &DVector<f64>,
        u: f64,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let m = self.gps.len();
        let mut q: Vec<f64> = x.iter().copied().collect();
        q.push(u);
        let mut next = DVector::zeros(m);
        let mut a = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        for (dim, gp) in self.gps.iter().enumerate() {
            let (mean, grad) = gp.predict_point_with_gradient(&q)?;
            next[dim] = mean;
            for j in 0..m {
                a[(dim, j)] = grad[j];
            }
            b[dim] = grad[m];
        }
        Ok((next, a, b))
    }

    fn step(&self, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
        let mut q: Vec<f64> = x.iter().copied().collect();
        q.push(u);
        self.gps
            .iter()
            .map(|gp| gp.predict_point(&q))
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec)
    }
}

fn output_of(row: &[f64], x: &DVector<f64>) -> f64 {
    row.iter().zip(x.iter()).map(|(c, v)| c * v).sum()
}

fn check_rollout_args<S: StepModel>(model: &S, output_row: &[f64], x1: &DVector<f64>) -> Result<()> {
    let m = model.state_dim();
    if x1.len() != m || output_row.len() != m {
        return Err(Error::invalid(format!(
            "state dimension {m} does not match initial state ({}) or output row ({})",
            x1.len(),
            output_row.len()
        )));
    }
    Ok(())
}

/// Roll a one-step model forward from `x1` under `u`.
pub fn rollout<S: StepModel>(
    model: &S,
    output_row: &[f64],
    u: &DVector<f64>,
    x1: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_rollout_args(model, output_row, x1)?;
    let n = u.len();
    let m = x1.len();
    let mut states = DMatrix::zeros(m, n);
    let mut y = DVector::zeros(n);
    let mut x = x1.clone();
    for k in 0..n {
        states.set_column(k, &x);
        y[k] = output_of(output_row, &x);
        if k + 1 < n {
            x = model.step(&x, u[k])?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(format!("rollout diverged at sample {}", k + 2)));
            }
        }
    }
    Ok((y, states))
}

/// Lifted Jacobian of [`rollout`] by forward sensitivity propagation.
pub fn linearize_rollout<S: StepModel>(
    model: &S,
    output_row: &[f64],
    u: &DVector<f64>,
    x1: &DVector<f64>,
) -> Result<LiftedJacobian> {
    check_rollout_args(model, output_row, x1)?;
    let n = u.len();
    let m = x1.len();
    let c = DVector::from_column_slice(output_row);
    let mut p = DMatrix::zeros(n, n);
    // sens(:, j) = d x_k / d u_j
    let mut sens = DMatrix::<f64>::zeros(m, n);
    let mut x = x1.clone();
    for k in 0..n.saturating_sub(1) {
        let (next, a, b) = model.step_with_jacobian(&x, u[k])?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("rollout diverged at sample {}", k + 2)));
        }
        // only columns 0..k are non-zero before this step
        let mut updated = DMatrix::zeros(m, n);
        if k > 0 {
            let active = sens.columns(0, k);
            updated.columns_mut(0, k).copy_from(&(&a * active));
        }
        updated.set_column(k, &b);
        sens = updated;
        x = next;
        for j in 0..=k {
            p[(k + 1, j)] = c.dot(&sens.column(j));
        }
    }
    Ok(LiftedJacobian(p))
}

/// Predicted output and state trajectories of the input/state model.
pub fn is_rollout(model: &IsModel, u: &DVector<f64>, x1: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if u.len() != model.horizon {
        return Err(Error::invalid(format!(
            "input has {} samples, model horizon is {}",
            u.len(),
            model.horizon
        )));
    }
    rollout(model, &model.output_row, u, x1)
}

pub fn linearize_is(model: &IsModel, u: &DVector<f64>, x1: &DVector<f64>) -> Result<LiftedJacobian> {
    if u.len() != model.horizon {
        return Err(Error::invalid(format!(
            "input has {} samples, model horizon is {}",
            u.len(),
            model.horizon
        )));
    }
    linearize_rollout(model, &model.output_row, u, x1)
}
