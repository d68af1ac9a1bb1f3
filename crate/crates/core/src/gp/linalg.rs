//! Symmetric positive-definite factorization with diagonal jitter escalation.
//!
//! The dense kernels run through faer's blocked Cholesky; the public surface
//! stays in nalgebra types.

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Lower-triangular Cholesky factor of `A + jitter * I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    llt: Llt<f64>,
    jitter: f64,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

impl SpdFactor {
    /// Factor `a`, adding `1e-10 * 10^k` to the diagonal until it succeeds or
    /// the jitter would exceed `1e-4`.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid("factorization needs a square matrix"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("matrix has non-finite entries"));
        }
        let mut work = to_faer(a);
        let n = a.nrows();
        let mut jitter = JITTER_START;
        let mut applied = 0.0;
        loop {
            for i in 0..n {
                work[(i, i)] += jitter - applied;
            }
            applied = jitter;
            if let Ok(llt) = Llt::new(work.as_ref(), Side::Lower) {
                let l = llt.L();
                let ok = (0..n).all(|i| l[(i, i)].is_finite() && l[(i, i)] > 0.0);
                if ok {
                    return Ok(Self { llt, jitter });
                }
            }
            jitter *= 10.0;
            if jitter > JITTER_MAX * (1.0 + 1e-9) {
                return Err(Error::numerical(format!(
                    "Cholesky failed with jitter up to {JITTER_MAX:e} ({n}x{n})"
                )));
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> DMatrix<f64> {
        from_faer(self.llt.L())
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.llt.solve(rhs);
        DVector::from_fn(b.len(), |i, _| x[(i, 0)])
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let x = self.llt.solve(to_faer(b));
        from_faer(x.as_ref())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        from_faer(self.llt.inverse().as_ref())
    }
}
