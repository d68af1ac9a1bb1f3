use nalgebra::{DMatrix, DVector};

use super::models::{plant_dynamics, Physics};
use crate::error::{Error, Result};

/// Exact zero-order-hold discretization via the augmented matrix exponential.
pub fn zoh_discretize(a: &DMatrix<f64>, b: &DVector<f64>, period: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = a.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * period));
    aug.view_mut((0, n), (n, 1)).copy_from(&(b * period));
    let e = aug.exp();
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, 1)).column(0).into_owned();
    (ad, bd)
}

/// Jacobians of the plant ODE at the zero state and zero input (central differences).
pub fn linearize_at_rest(physics: &Physics) -> (DMatrix<f64>, DVector<f64>) {
    let m = physics.state_dim();
    let h = 1e-6;
    let zero = DVector::zeros(m);
    let mut a = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut xp = zero.clone();
        let mut xm = zero.clone();
        xp[j] = h;
        xm[j] = -h;
        let col = (plant_dynamics(physics, &xp, 0.0) - plant_dynamics(physics, &xm, 0.0)) / (2.0 * h);
        a.set_column(j, &col);
    }
    let b = (plant_dynamics(physics, &zero, h) - plant_dynamics(physics, &zero, -h)) / (2.0 * h);
    (a, b)
}

/// Infinite-horizon discrete LQR gain `k` for `u = -k^T x`.
///
/// Iterates the Riccati recursion in closed-loop (Joseph) form, which stays
/// positive semidefinite for weakly controllable directions where the plain
/// recursion loses it to cancellation.
pub fn discrete_lqr(ad: &DMatrix<f64>, bd: &DVector<f64>, q: &DMatrix<f64>, r: f64) -> Result<DVector<f64>> {
    let gain_of = |p: &DMatrix<f64>| {
        let pb = p * bd;
        (ad.transpose() * &pb) / (r + bd.dot(&pb))
    };
    let mut p = q.clone();
    for _ in 0..200_000 {
        let k = gain_of(&p);
        let closed = ad - bd * k.transpose();
        let mut next = q + closed.transpose() * &p * &closed + &k * k.transpose() * r;
        next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let delta = (&next - &p).abs().max();
        p = next;
        if delta <= 1e-12 * p.abs().max().max(1.0) {
            return Ok(gain_of(&p));
        }
    }
    Err(Error::numerical("Riccati iteration did not converge"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_zoh_matches_closed_form() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let b = DVector::from_element(1, 3.0);
        let (ad, bd) = zoh_discretize(&a, &b, 0.1);
        assert_relative_eq!(ad[(0, 0)], (-0.2f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(bd[0], 3.0 * (1.0 - (-0.2f64).exp()) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn lqr_stabilizes_double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let (ad, bd) = zoh_discretize(&a, &b, 0.02);
        let k = discrete_lqr(&ad, &bd, &DMatrix::identity(2, 2), 1.0).unwrap();
        let closed = &ad - &bd * k.transpose();
        let rho = closed
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(rho < 1.0);
    }
}
