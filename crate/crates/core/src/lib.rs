//! Autonomous iterative motion learning.
//!
//! The learning loop applies a feedforward input trajectory to a plant, fits a
//! Gaussian-process model of the plant from the most recent trials, linearizes
//! that model around the current input, and computes the next input with a
//! norm-optimal ILC update whose weights are derived from the model itself.
//!
//! Module map:
//! - [`gp`]: squared-exponential GP regression and evidence maximization.
//! - [`dynamics`]: the input/output (lifted) and input/state (rollout) plant models.
//! - [`ilc`]: weights, learning gain, input update and initial input design.
//! - [`signal`]: spectra, zero-phase filtering, error metrics, reference generation.
//! - [`plant`]: simulated testbeds and the linear oracle plant.
//! - [`harness`]: campaigns, persistence and the CLI plumbing.

pub mod dynamics;
pub mod error;
pub mod gp;
pub mod harness;
pub mod ilc;
pub mod plant;
pub mod seed;
pub mod signal;
mod table;

pub use error::{Error, Result};
