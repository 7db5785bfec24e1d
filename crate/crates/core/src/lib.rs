//! Controlled SIR epidemics under parameter and measurement uncertainty.
//!
//! - [`model`]: dynamics, Euler discretisation, closed-form peak.
//! - [`integrate`] and [`events`]: fixed-step integration and switching-time detection.
//! - [`estimation`]: two-sample least squares for `(beta, gamma)` with error bounds.
//! - [`control`]: optimal and robust isolation policies, closed-loop simulation.
//! - [`analysis`]: cost and optimality-gap accounting.
//! - [`harness`]: scenario configs, noise injection, experiment drivers and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod estimation;
pub mod events;
pub mod harness;
pub mod integrate;
pub mod model;

pub use integrate::{integrate, IntegratorConfig, Method, Trajectory, TrajectorySample};
pub use model::{ControlBounds, EpidemicParams, ModelError, SirState};
