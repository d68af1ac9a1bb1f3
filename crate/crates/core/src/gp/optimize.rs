//! Box-constrained BFGS used for evidence maximization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsSettings {
    pub max_iter: usize,
    /// Projected-gradient tolerance relative to `max(|f|, 1)`.
    pub grad_tol: f64,
    /// Largest per-coordinate move of a single line-search trial.
    pub max_step: f64,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, h))| {
            if (*xi <= *l && *gi > 0.0) || (*xi >= *h && *gi < 0.0) {
                0.0
            } else {
                *gi
            }
        })
        .collect()
}

/// Minimize `f` over the box `[lo, hi]`. `f` returns the value and gradient;
/// evaluation errors are treated as infeasible points during line search.
pub(crate) fn minimize<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: BfgsSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    if !fx.is_finite() {
        return Err(Error::numerical("objective is not finite at the start point"));
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stalls = 0;

    while iterations < settings.max_iter {
        let pg = projected_gradient(&x, &g, lo, hi);
        let pg_norm = pg.iter().map(|v| v * v).sum::<f64>().sqrt();
        if pg_norm < settings.grad_tol * fx.abs().max(1.0) {
            break;
        }
        iterations += 1;

        let active: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p == 0.0 && *gi != 0.0).collect();
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        for (di, a) in d.iter_mut().zip(&active) {
            if *a {
                *di = 0.0;
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            d = pg.iter().map(|v| -v).collect();
            h = DMatrix::identity(n, n);
            fresh = true;
        }
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = if dmax > settings.max_step {
            settings.max_step / dmax
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..30 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xn, lo, hi);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            evaluations += 1;
            if let Ok((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((xn, fn_, gn)) = accepted else {
            if fresh {
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };

        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            if fresh {
                // rescale the identity to the observed curvature before the first update
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
            fresh = false;
        }

        let change = (fx - fn_).abs();
        x = xn;
        g = gn;
        fx = fn_;
        if change <= 1e-10 * fx.abs().max(1.0) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }

    Ok(Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SETTINGS: BfgsSettings = BfgsSettings {
        max_iter: 200,
        grad_tol: 1e-8,
        max_step: 10.0,
    };

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((v, g))
        };
        let m = minimize(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], SETTINGS).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn respects_bounds() {
        // unconstrained minimum at (3, -2)
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((
                (x[0] - 3.0).powi(2) + (x[1] + 2.0).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 2.0)],
            ))
        };
        let m = minimize(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], SETTINGS).unwrap();
        assert_eq!(m.x, vec![1.0, -1.0]);
    }

    #[test]
    fn never_increases_objective() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v = x[0].sin() * x[1].cos() + 0.1 * (x[0] * x[0] + x[1] * x[1]);
            Ok((
                v,
                vec![
                    x[0].cos() * x[1].cos() + 0.2 * x[0],
                    -x[0].sin() * x[1].sin() + 0.2 * x[1],
                ],
            ))
        };
        let start = [2.0, 0.5];
        let f0 = f(&start).unwrap().0;
        let m = minimize(f, &start, &[-10.0; 2], &[10.0; 2], SETTINGS).unwrap();
        assert!(m.value <= f0);
    }
}
