use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous-time plant equations. Angles in rad, torques in N·m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Physics {
    /// Hanging pendulum body driven by a reaction wheel.
    /// State `(alpha, alpha_dot, wheel_speed)`.
    ReactionWheelPendulum {
        mass: f64,
        com_distance: f64,
        body_inertia: f64,
        wheel_inertia: f64,
        body_damping: f64,
        wheel_damping: f64,
        gravity: f64,
    },
    /// Planar two-wheeled inverted pendulum, torque between body and wheels.
    /// State `(pitch, pitch_rate, position, velocity)`.
    WheeledInvertedPendulum {
        body_mass: f64,
        wheel_mass: f64,
        wheel_radius: f64,
        com_height: f64,
        body_inertia: f64,
        wheel_inertia: f64,
        damping: f64,
        gravity: f64,
    },
    /// Hanging double pendulum with point masses, torque on the first joint.
    /// State `(alpha, alpha_dot, beta, beta_dot)`, `beta` relative to link one.
    DoublePendulum {
        mass1: f64,
        mass2: f64,
        length1: f64,
        length2: f64,
        damping1: f64,
        damping2: f64,
        gravity: f64,
    },
    /// `x' = A x + b u` with `A` given row by row.
    Linear { a: Vec<Vec<f64>>, b: Vec<f64> },
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config("linear plant matrix must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl Physics {
    pub fn state_dim(&self) -> usize {
        match self {
            Physics::ReactionWheelPendulum { .. } => 3,
            Physics::WheeledInvertedPendulum { .. } | Physics::DoublePendulum { .. } => 4,
            Physics::Linear { b, .. } => b.len(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be non-negative, got {v}")))
            }
        };
        match *self {
            Physics::ReactionWheelPendulum {
                mass,
                com_distance,
                body_inertia,
                wheel_inertia,
                body_damping,
                wheel_damping,
                gravity,
            } => {
                positive("mass", mass)?;
                positive("com_distance", com_distance)?;
                positive("body_inertia", body_inertia)?;
                positive("wheel_inertia", wheel_inertia)?;
                nonneg("body_damping", body_damping)?;
                nonneg("wheel_damping", wheel_damping)?;
                nonneg("gravity", gravity)
            }
            Physics::WheeledInvertedPendulum {
                body_mass,
                wheel_mass,
                wheel_radius,
                com_height,
                body_inertia,
                wheel_inertia,
                damping,
                gravity,
            } => {
                positive("body_mass", body_mass)?;
                nonneg("wheel_mass", wheel_mass)?;
                positive("wheel_radius", wheel_radius)?;
                positive("com_height", com_height)?;
                positive("body_inertia", body_inertia)?;
                nonneg("wheel_inertia", wheel_inertia)?;
                nonneg("damping", damping)?;
                nonneg("gravity", gravity)
            }
            Physics::DoublePendulum {
                mass1,
                mass2,
                length1,
                length2,
                damping1,
                damping2,
                gravity,
            } => {
                positive("mass1", mass1)?;
                positive("mass2", mass2)?;
                positive("length1", length1)?;
                positive("length2", length2)?;
                nonneg("damping1", damping1)?;
                nonneg("damping2", damping2)?;
                nonneg("gravity", gravity)
            }
            Physics::Linear { ref a, ref b } => {
                let m = matrix_from_rows(a)?;
                if m.nrows() != b.len() {
                    return Err(Error::Config("linear plant: A and b sizes differ".into()));
                }
                if m.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::Config("linear plant has non-finite entries".into()));
                }
                Ok(())
            }
        }
    }

    /// Total mechanical energy (zero-input conservative part), where defined.
    pub fn energy(&self, x: &DVector<f64>) -> Option<f64> {
        match *self {
            Physics::DoublePendulum {
                mass1: m1,
                mass2: m2,
                length1: l1,
                length2: l2,
                gravity: g,
                ..
            } => {
                let (a, da, b, db) = (x[0], x[1], x[2], x[3]);
                let cb = b.cos();
                let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * cb;
                let m12 = m2 * l2 * l2 + m2 * l1 * l2 * cb;
                let m22 = m2 * l2 * l2;
                let kinetic = 0.5 * (m11 * da * da + 2.0 * m12 * da * db + m22 * db * db);
                let potential = -(m1 + m2) * g * l1 * a.cos() - m2 * g * l2 * (a + b).cos();
                Some(kinetic + potential)
            }
            Physics::ReactionWheelPendulum {
                mass,
                com_distance,
                body_inertia,
                wheel_inertia,
                gravity,
                ..
            } => Some(
                0.5 * (body_inertia + wheel_inertia) * x[1] * x[1]
                    + 0.5 * wheel_inertia * x[2] * x[2]
                    - mass * gravity * com_distance * x[0].cos(),
            ),
            _ => None,
        }
    }
}

/// State derivative for total actuation `u`.
pub fn plant_dynamics(physics: &Physics, x: &DVector<f64>, u: f64) -> DVector<f64> {
    match *physics {
        Physics::ReactionWheelPendulum {
            mass,
            com_distance,
            body_inertia,
            wheel_inertia,
            body_damping,
            wheel_damping,
            gravity,
        } => {
            // Angle measured from the hanging rest position.
            let (alpha, dalpha, wheel) = (x[0], x[1], x[2]);
            let ddalpha = (-mass * gravity * com_distance * alpha.sin() - body_damping * dalpha - u)
                / (body_inertia + wheel_inertia);
            let dwheel = (u - wheel_damping * wheel) / wheel_inertia;
            DVector::from_vec(vec![dalpha, ddalpha, dwheel])
        }
        Physics::WheeledInvertedPendulum {
            body_mass: mb,
            wheel_mass: mw,
            wheel_radius: r,
            com_height: l,
            body_inertia: ib,
            wheel_inertia: iw,
            damping: c,
            gravity: g,
        } => {
            let (th, dth, _s, ds) = (x[0], x[1], x[2], x[3]);
            let (st, ct) = th.sin_cos();
            let m_ss = mb + mw + iw / (r * r);
            let m_st = mb * l * ct;
            let m_tt = ib + mb * l * l;
            // viscous friction on the motor's relative rotation
            let slip = c * (ds / r - dth);
            let f_s = u / r + mb * l * st * dth * dth - slip / r;
            let f_t = mb * g * l * st - u + slip;
            let det = m_ss * m_tt - m_st * m_st;
            let dds = (m_tt * f_s - m_st * f_t) / det;
            let ddth = (m_ss * f_t - m_st * f_s) / det;
            DVector::from_vec(vec![dth, ddth, ds, dds])
        }
        Physics::DoublePendulum {
            mass1: m1,
            mass2: m2,
            length1: l1,
            length2: l2,
            damping1: d1,
            damping2: d2,
            gravity: g,
        } => {
            let (a, da, b, db) = (x[0], x[1], x[2], x[3]);
            let (sb, cb) = b.sin_cos();
            let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * cb;
            let m12 = m2 * l2 * l2 + m2 * l1 * l2 * cb;
            let m22 = m2 * l2 * l2;
            let h = m2 * l1 * l2 * sb;
            let c1 = -h * (2.0 * da * db + db * db);
            let c2 = h * da * da;
            let g1 = (m1 + m2) * g * l1 * a.sin() + m2 * g * l2 * (a + b).sin();
            let g2 = m2 * g * l2 * (a + b).sin();
            let r1 = u - d1 * da - c1 - g1;
            let r2 = -d2 * db - c2 - g2;
            let det = m11 * m22 - m12 * m12;
            let dda = (m22 * r1 - m12 * r2) / det;
            let ddb = (m11 * r2 - m12 * r1) / det;
            DVector::from_vec(vec![da, dda, db, ddb])
        }
        Physics::Linear { ref a, ref b } => {
            let n = b.len();
            DVector::from_fn(n, |i, _| {
                a[i].iter().zip(x.iter()).map(|(aij, xj)| aij * xj).sum::<f64>() + b[i] * u
            })
        }
    }
}
