//! Switching-time detection on integrated trajectories.
//!
//! Crossings are bracketed by consecutive nodes, then refined by bisection
//! on the dense output of the bracketing step.

use thiserror::Error;

use crate::integrate::Trajectory;
use crate::model::SirState;

/// Target accuracy of the event function at a refined crossing.
pub const EVENT_TOL: f64 = 1e-8;

const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("effective rates must be positive, got beta={beta}, gamma={gamma}")]
    InvalidRates { beta: f64, gamma: f64 },
    #[error("herd immunity not reached by t={horizon}")]
    NotReached { horizon: f64 },
}

/// Shrink a bracket `[lo, hi]` with `g(lo) < 0 <= g(hi)` until `|g(hi)| <= EVENT_TOL`
/// or the bracket collapses. Returns the right end, which is always on the
/// triggered side.
pub(crate) fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut lo: f64, mut hi: f64) -> f64 {
    let mut g_hi = g(hi);
    for _ in 0..MAX_BISECTIONS {
        if g_hi.abs() <= EVENT_TOL || hi - lo <= 1e-13 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid >= 0.0 {
            hi = mid;
            g_hi = g_mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// First time at which `event(state) >= 0` along `traj`.
pub fn first_crossing<E>(traj: &Trajectory, event: E) -> Option<f64>
where
    E: Fn(&SirState) -> f64,
{
    let first = traj.samples.first()?;
    if event(&first.state) >= 0.0 {
        return Some(first.state.t);
    }
    let k = traj.samples.windows(2).position(|w| event(&w[1].state) >= 0.0)?;
    let t0 = traj.samples[k].state.t;
    let dt = traj.samples[k + 1].state.t - t0;
    let tau = bisect(|tau| event(&traj.partial_step(k, tau)), 0.0, dt);
    Some(t0 + tau)
}

/// First time the infected fraction, raised by `inflation`, reaches `threshold`.
///
/// With `inflation = 0` this is the plain threshold-reach time; a positive
/// inflation emulates an upper envelope of the infection series.
pub fn find_threshold_crossing(traj: &Trajectory, threshold: f64, inflation: f64) -> Option<f64> {
    first_crossing(traj, |s| s.i + inflation - threshold)
}

/// First time `beta_eff * S <= gamma_eff` along `traj`.
pub fn find_herd_immunity(traj: &Trajectory, beta_eff: f64, gamma_eff: f64) -> Result<f64, EventError> {
    if !(beta_eff > 0.0 && gamma_eff > 0.0) {
        return Err(EventError::InvalidRates { beta: beta_eff, gamma: gamma_eff });
    }
    first_crossing(traj, |s| gamma_eff - beta_eff * s.s)
        .ok_or(EventError::NotReached { horizon: traj.end_time().unwrap_or(f64::NAN) })
}
