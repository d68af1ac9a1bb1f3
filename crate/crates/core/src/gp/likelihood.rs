use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::kernel::{column, KernelKind, KernelParams};
use super::linalg::SpdFactor;
use super::GpDataset;
use crate::error::{Error, Result};

/// Log marginal likelihood of the standardized targets and its gradient with
/// respect to `(ln l_1, .., ln l_G, ln sigma^2)`.
///
/// `G` is 1 for the shared kernel and the regression dimension for ARD.
pub fn log_marginal_likelihood(
    dataset: &GpDataset,
    params: &KernelParams,
    kind: KernelKind,
) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    let ws = LmlWorkspace::new(dataset, kind);
    if params.length_scales.len() != ws.groups() {
        return Err(Error::invalid(format!(
            "expected {} length scales, got {}",
            ws.groups(),
            params.length_scales.len()
        )));
    }
    let logs: Vec<f64> = params.length_scales.iter().map(|l| l.ln()).collect();
    ws.evaluate(&logs, params.noise_variance.ln())
}

/// Pairwise squared differences cached for repeated likelihood evaluation.
pub(crate) struct LmlWorkspace {
    n: usize,
    groups: usize,
    targets: DVector<f64>,
    /// Packed strict upper triangle (`i < j`, column by column), `groups` values per pair.
    pairs: Vec<f64>,
}

impl LmlWorkspace {
    pub(crate) fn new(dataset: &GpDataset, kind: KernelKind) -> Self {
        let design = dataset.design();
        let n = design.ncols();
        let d = design.nrows();
        let groups = match kind {
            KernelKind::Shared => 1,
            KernelKind::Ard => d,
        };
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2 * groups);
        for j in 0..n {
            let cj = column(design, j);
            for i in 0..j {
                let ci = column(design, i);
                match kind {
                    KernelKind::Shared => pairs.push(ci.iter().zip(cj).map(|(a, b)| (a - b) * (a - b)).sum()),
                    KernelKind::Ard => pairs.extend(ci.iter().zip(cj).map(|(a, b)| (a - b) * (a - b))),
                }
            }
        }
        Self {
            n,
            groups,
            targets: dataset.standardized_targets(),
            pairs,
        }
    }

    pub(crate) fn groups(&self) -> usize {
        self.groups
    }

    /// Median of the positive pairwise distances for each group.
    pub(crate) fn median_distances(&self) -> Vec<f64> {
        (0..self.groups)
            .map(|g| {
                let mut vals: Vec<f64> = self
                    .pairs
                    .iter()
                    .skip(g)
                    .step_by(self.groups)
                    .copied()
                    .filter(|v| *v > 0.0)
                    .collect();
                if vals.is_empty() {
                    return 1.0;
                }
                let mid = vals.len() / 2;
                let (_, med, _) = vals.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
                med.sqrt()
            })
            .collect()
    }

    pub(crate) fn evaluate(&self, log_scales: &[f64], log_noise: f64) -> Result<(f64, Vec<f64>)> {
        let n = self.n;
        let g = self.groups;
        let inv_sq: Vec<f64> = log_scales.iter().map(|t| (-2.0 * t).exp()).collect();
        let noise = log_noise.exp();
        let mut k = DMatrix::from_diagonal_element(n, n, 1.0 + noise);
        {
            let ks = k.as_mut_slice();
            let mut chunks = self.pairs.chunks_exact(g);
            for j in 0..n {
                for i in 0..j {
                    let sq = chunks.next().expect("pair count matches");
                    let q: f64 = sq.iter().zip(&inv_sq).map(|(m, w)| m * w).sum();
                    let v = (-0.5 * q).exp();
                    ks[j * n + i] = v;
                    ks[i * n + j] = v;
                }
            }
        }
        let factor = SpdFactor::new(&k)?;
        let alpha = factor.solve_vec(&self.targets);
        let value = -0.5 * self.targets.dot(&alpha)
            - 0.5 * factor.log_det()
            - 0.5 * n as f64 * (2.0 * PI).ln();
        if !value.is_finite() {
            return Err(Error::numerical("log marginal likelihood is not finite"));
        }

        let k_inv = factor.inverse();
        // W = alpha alpha^T - K^-1; dL/dtheta = 0.5 * sum(W .* dK/dtheta).
        // dK/dln(l) vanishes on the diagonal, so only the strict upper triangle is summed (twice).
        let mut acc = vec![0.0; g];
        let ks = k.as_slice();
        let inv = k_inv.as_slice();
        let mut chunks = self.pairs.chunks_exact(g);
        for j in 0..n {
            let aj = alpha[j];
            for i in 0..j {
                let sq = chunks.next().expect("pair count matches");
                let w = alpha[i] * aj - inv[j * n + i];
                let wk = w * ks[j * n + i];
                for (a, m) in acc.iter_mut().zip(sq) {
                    *a += wk * m;
                }
            }
        }
        let mut grad: Vec<f64> = acc.iter().zip(&inv_sq).map(|(a, s)| a * s).collect();
        let trace_inv: f64 = (0..n).map(|i| inv[i * n + i]).sum();
        grad.push(0.5 * noise * (alpha.dot(&alpha) - trace_inv));
        Ok((value, grad))
    }
}
