//! Squared-exponential kernels with unit amplitude.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on the noise variance, in standardized target units.
pub const NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// One length scale shared by every regression dimension.
    Shared,
    /// One length scale per regression dimension (ARD).
    Ard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(length_scales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let params = Self {
            length_scales,
            noise_variance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn shared(length_scale: f64, noise_variance: f64) -> Result<Self> {
        Self::new(vec![length_scale], noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_scales.is_empty() {
            return Err(Error::invalid("at least one length scale is required"));
        }
        if let Some(l) = self
            .length_scales
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::invalid(format!("length scale must be positive, got {l}")));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= NOISE_FLOOR) {
            return Err(Error::invalid(format!(
                "noise variance {} is below the floor {NOISE_FLOOR:e}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Length scales expanded to one per dimension.
    pub(crate) fn scales_for(&self, kind: KernelKind, dim: usize) -> Result<Vec<f64>> {
        match kind {
            KernelKind::Shared => {
                if self.length_scales.len() != 1 {
                    return Err(Error::invalid(format!(
                        "shared kernel takes one length scale, got {}",
                        self.length_scales.len()
                    )));
                }
                Ok(vec![self.length_scales[0]; dim])
            }
            KernelKind::Ard => {
                if self.length_scales.len() != dim {
                    return Err(Error::invalid(format!(
                        "ARD kernel needs {dim} length scales, got {}",
                        self.length_scales.len()
                    )));
                }
                Ok(self.length_scales.clone())
            }
        }
    }
}

/// `exp(-|v - w|^2 / (2 l^2))`.
pub fn sek_shared(v: &[f64], w: &[f64], length_scale: f64) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            v.len(),
            w.len()
        )));
    }
    if !(length_scale.is_finite() && length_scale > 0.0) {
        return Err(Error::invalid("length scale must be positive"));
    }
    let d2: f64 = v.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-0.5 * d2 / (length_scale * length_scale)).exp())
}

/// `exp(-0.5 (v - w)^T diag(scales)^-2 (v - w))`.
pub fn sek_ard(v: &[f64], w: &[f64], scales: &[f64]) -> Result<f64> {
    if v.len() != w.len() || v.len() != scales.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {}, {}, {} scales",
            v.len(),
            w.len(),
            scales.len()
        )));
    }
    if scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid("length scales must be positive"));
    }
    if scales.iter().all(|l| *l == scales[0]) && !scales.is_empty() {
        return sek_shared(v, w, scales[0]);
    }
    let q: f64 = v
        .iter()
        .zip(w)
        .zip(scales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum();
    Ok((-0.5 * q).exp())
}

#[inline]
pub(crate) fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let d = m.nrows();
    &m.as_slice()[j * d..(j + 1) * d]
}

#[inline]
pub(crate) fn scaled_sq_dist(a: &[f64], b: &[f64], inv_sq: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(inv_sq)
        .map(|((x, y), w)| {
            let d = x - y;
            d * d * w
        })
        .sum()
}

/// Kernel matrix with entry `(i, j) = k(a_i, b_j)` for the columns of `a` and `b`.
pub fn kernel_matrix(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &KernelParams,
    kind: KernelKind,
) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid(format!(
            "row dimension mismatch: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let scales = params.scales_for(kind, a.nrows())?;
    if scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid("length scales must be positive"));
    }
    let inv_sq: Vec<f64> = scales.iter().map(|l| 1.0 / (l * l)).collect();
    Ok(DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        (-0.5 * scaled_sq_dist(column(a, i), column(b, j), &inv_sq)).exp()
    }))
}
