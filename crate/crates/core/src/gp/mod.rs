//! Gaussian-process regression with unit-amplitude squared-exponential kernels.
//!
//! Targets are standardized before fitting (the kernel has no signal-variance
//! hyperparameter) and predictions are mapped back to target units. The
//! noise variance and length scales are found by maximizing the log marginal
//! likelihood from several seeded starting points.

mod kernel;
mod likelihood;
pub(crate) mod linalg;
mod optimize;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{kernel_matrix, sek_ard, sek_shared, KernelKind, KernelParams, NOISE_FLOOR};
pub use likelihood::log_marginal_likelihood;
pub use linalg::SpdFactor;

use kernel::{column, scaled_sq_dist};
use likelihood::LmlWorkspace;
use optimize::{minimize, BfgsSettings};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Floor for the target standardization scale (constant targets).
pub const TARGET_SCALE_FLOOR: f64 = 1e-8;

/// Regression vectors (columns of `design`) with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GpDataset {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    target_shift: f64,
    target_scale: f64,
}

impl GpDataset {
    /// Dataset standardized by the sample mean and (population) standard
    /// deviation of the targets.
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        let k = targets.len();
        if k == 0 {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        let mean = targets.mean();
        let var = targets.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / k as f64;
        Self::with_standardization(design, targets, mean, var.sqrt().max(TARGET_SCALE_FLOOR))
    }

    pub fn with_standardization(
        design: DMatrix<f64>,
        targets: DVector<f64>,
        target_shift: f64,
        target_scale: f64,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::invalid("dataset needs at least one observation"));
        }
        if design.ncols() != targets.len() {
            return Err(Error::invalid(format!(
                "design has {} columns but there are {} targets",
                design.ncols(),
                targets.len()
            )));
        }
        if design.nrows() == 0 {
            return Err(Error::invalid("regression dimension must be positive"));
        }
        if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        if !(target_scale.is_finite() && target_scale > 0.0) || !target_shift.is_finite() {
            return Err(Error::invalid("target standardization must be finite with positive scale"));
        }
        Ok(Self {
            design,
            targets,
            target_shift,
            target_scale,
        })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn target_shift(&self) -> f64 {
        self.target_shift
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn dim(&self) -> usize {
        self.design.nrows()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn standardized_targets(&self) -> DVector<f64> {
        self.targets
            .map(|z| (z - self.target_shift) / self.target_scale)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Extra start at a previous optimum.
    pub warm_start: Option<KernelParams>,
    /// Start length scales are log-uniform over this multiple of the median pairwise distance.
    pub start_scale_range: (f64, f64),
    pub start_noise_range: (f64, f64),
    /// Search box for length scales, as multiples of the median pairwise distance.
    pub scale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iter: 200,
            grad_tol: 1e-5,
            seed: 0,
            warm_start: None,
            start_scale_range: (0.1, 10.0),
            start_noise_range: (1e-4, 1e-1),
            scale_bounds: (1e-2, 1e2),
            noise_bounds: (NOISE_FLOOR, 10.0),
        }
    }
}

/// Outcome of one optimizer run, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub initial: KernelParams,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub log_likelihood: f64,
    pub starts: Vec<StartOutcome>,
}

/// A conditioned GP. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    dataset: GpDataset,
    params: KernelParams,
    kind: KernelKind,
    inv_sq_scales: Vec<f64>,
    factor: SpdFactor,
    alpha: DVector<f64>,
    report: Option<FitReport>,
}

impl GpModel {
    /// Condition on `dataset` with fixed hyperparameters.
    pub fn from_params(dataset: GpDataset, params: KernelParams, kind: KernelKind) -> Result<Self> {
        params.validate()?;
        let scales = params.scales_for(kind, dataset.dim())?;
        let mut k = kernel_matrix(&dataset.design, &dataset.design, &params, kind)?;
        for i in 0..k.nrows() {
            k[(i, i)] += params.noise_variance;
        }
        let factor = SpdFactor::new(&k)?;
        let alpha = factor.solve_vec(&dataset.standardized_targets());
        Ok(Self {
            dataset,
            inv_sq_scales: scales.iter().map(|l| 1.0 / (l * l)).collect(),
            params,
            kind,
            factor,
            alpha,
            report: None,
        })
    }

    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    /// `1 / l_d^2` for every regression dimension.
    pub fn inverse_sq_scales(&self) -> &[f64] {
        &self.inv_sq_scales
    }

    fn check_query(&self, q: &DMatrix<f64>) -> Result<()> {
        if q.nrows() != self.dataset.dim() {
            return Err(Error::invalid(format!(
                "query dimension {} does not match model dimension {}",
                q.nrows(),
                self.dataset.dim()
            )));
        }
        Ok(())
    }

    /// Cross-kernel `K_QV` between query columns and training columns.
    pub fn cross_kernel(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_query(q)?;
        kernel_matrix(q, &self.dataset.design, &self.params, self.kind)
    }

    /// Posterior mean in standardized units.
    pub fn predict_mean_standardized(&self, q: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.cross_kernel(q)? * &self.alpha)
    }

    /// Posterior mean in target units.
    pub fn predict_mean(&self, q: &DMatrix<f64>) -> Result<DVector<f64>> {
        let s = self.dataset.target_scale;
        let c = self.dataset.target_shift;
        Ok(self.predict_mean_standardized(q)?.map(|m| m * s + c))
    }

    /// Mean at a single point.
    pub fn predict_point(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.dataset.dim() {
            return Err(Error::invalid("query dimension mismatch"));
        }
        let design = &self.dataset.design;
        let m: f64 = (0..design.ncols())
            .map(|k| {
                self.alpha[k] * (-0.5 * scaled_sq_dist(q, column(design, k), &self.inv_sq_scales)).exp()
            })
            .sum();
        Ok(m * self.dataset.target_scale + self.dataset.target_shift)
    }

    /// Mean and its gradient with respect to the query point, in target units.
    pub fn predict_point_with_gradient(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = self.dataset.dim();
        if q.len() != d {
            return Err(Error::invalid("query dimension mismatch"));
        }
        let design = &self.dataset.design;
        let mut mean = 0.0;
        let mut grad = vec![0.0; d];
        for k in 0..design.ncols() {
            let v = column(design, k);
            let w = self.alpha[k] * (-0.5 * scaled_sq_dist(q, v, &self.inv_sq_scales)).exp();
            mean += w;
            for ((g, (qi, vi)), s) in grad.iter_mut().zip(q.iter().zip(v)).zip(&self.inv_sq_scales) {
                *g -= w * (qi - vi) * s;
            }
        }
        let scale = self.dataset.target_scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((mean * scale + self.dataset.target_shift, grad))
    }

    /// Posterior covariance in standardized units (prior variance 1).
    pub fn predict_cov(&self, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k_qv = self.cross_kernel(q)?;
        let k_qq = kernel_matrix(q, q, &self.params, self.kind)?;
        let solved = self.factor.solve_mat(&k_qv.transpose());
        let mut cov = k_qq - &k_qv * solved;
        let f = cov.nrows();
        for j in 0..f {
            for i in 0..j {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(j, j)] < 0.0 {
                if cov[(j, j)] < -1e-10 {
                    return Err(Error::numerical(format!(
                        "negative posterior variance {:e}",
                        cov[(j, j)]
                    )));
                }
                cov[(j, j)] = 0.0;
            }
        }
        Ok(cov)
    }
}

/// Posterior mean at the columns of `q`, in target units.
pub fn gp_predict_mean(model: &GpModel, q: &DMatrix<f64>) -> Result<DVector<f64>> {
    model.predict_mean(q)
}

/// Posterior covariance at the columns of `q`, in standardized units.
pub fn gp_predict_cov(model: &GpModel, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.predict_cov(q)
}

/// Fit hyperparameters by multi-start evidence maximization and condition the model.
pub fn gp_fit(dataset: GpDataset, kind: KernelKind, cfg: &FitConfig) -> Result<GpModel> {
    let ws = LmlWorkspace::new(&dataset, kind);
    let groups = ws.groups();
    let medians = ws.median_distances();

    let mut lo: Vec<f64> = medians.iter().map(|m| (m * cfg.scale_bounds.0).ln()).collect();
    let mut hi: Vec<f64> = medians.iter().map(|m| (m * cfg.scale_bounds.1).ln()).collect();
    lo.push(cfg.noise_bounds.0.max(NOISE_FLOOR).ln());
    hi.push(cfg.noise_bounds.1.ln());

    let mut rng = rng_from_seed(cfg.seed);
    let (s_lo, s_hi) = (cfg.start_scale_range.0.ln(), cfg.start_scale_range.1.ln());
    let (n_lo, n_hi) = (cfg.start_noise_range.0.ln(), cfg.start_noise_range.1.ln());
    let mut starts: Vec<Vec<f64>> = (0..cfg.starts)
        .map(|_| {
            let mut x: Vec<f64> = medians
                .iter()
                .map(|m| m.ln() + rng.gen_range(s_lo..=s_hi))
                .collect();
            x.push(rng.gen_range(n_lo..=n_hi));
            x
        })
        .collect();
    if let Some(warm) = &cfg.warm_start {
        if warm.length_scales.len() == groups {
            let mut x: Vec<f64> = warm.length_scales.iter().map(|l| l.ln()).collect();
            x.push(warm.noise_variance.ln());
            starts.push(x);
        }
    }
    for x in &mut starts {
        for ((v, l), h) in x.iter_mut().zip(&lo).zip(&hi) {
            *v = v.clamp(*l, *h);
        }
    }

    let settings = BfgsSettings {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        max_step: 3.0,
    };
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = ws.evaluate(&x[..groups], x[groups])?;
        Ok((-v, g.into_iter().map(|gi| -gi).collect()))
    };

    let to_params = |x: &[f64]| KernelParams {
        length_scales: x[..groups].iter().map(|t| t.exp()).collect(),
        noise_variance: x[groups].exp().max(NOISE_FLOOR),
    };

    let mut outcomes = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    for x0 in &starts {
        let initial = match objective(x0) {
            Ok((v, _)) => -v,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let min = match minimize(objective, x0, &lo, &hi, settings) {
            Ok(m) => m,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let value = -min.value;
        outcomes.push(StartOutcome {
            initial: to_params(x0),
            initial_log_likelihood: initial,
            final_log_likelihood: value,
            iterations: min.iterations,
            evaluations: min.evaluations,
        });
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, min.x));
        }
    }

    let Some((lml, x)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::numerical("no optimizer start succeeded")));
    };
    let mut model = GpModel::from_params(dataset, to_params(&x), kind)?;
    model.report = Some(FitReport {
        log_likelihood: lml,
        starts: outcomes,
    });
    Ok(model)
}
