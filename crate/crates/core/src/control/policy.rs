use serde::{Deserialize, Serialize};

use crate::control::bounds::Envelope;
use crate::model::{ControlBounds, EpidemicParams, SirState};

/// Phase of the three-stage isolation policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Before the infection threshold is reached; no isolation.
    Growth,
    /// Holding infections at the threshold.
    Hold,
    /// Past herd immunity; no isolation, latched.
    Release,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Growth => 1,
            Stage::Hold => 2,
            Stage::Release => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Stage::Growth),
            2 => Some(Stage::Hold),
            3 => Some(Stage::Release),
            _ => None,
        }
    }
}

/// Threshold-reach and herd-immunity times of one run; `None` if not reached.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchingTimes {
    pub t_b: Option<f64>,
    pub t_h: Option<f64>,
}

impl SwitchingTimes {
    pub fn stage_at(&self, t: f64) -> Stage {
        match (self.t_b, self.t_h) {
            (_, Some(th)) if t >= th => Stage::Release,
            (Some(tb), _) if t >= tb => Stage::Hold,
            _ => Stage::Growth,
        }
    }
}

/// Which information a closed-loop controller acts on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// True parameters and true states.
    Optimal,
    /// Worst-case parameters and the upper envelopes of the measured states.
    Robust { beta_max: f64, gamma_min: f64 },
    /// Optimal-form rule fed point estimates and raw measurements.
    Misestimated { beta: f64, gamma: f64 },
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Optimal => "optimal",
            PolicyKind::Robust { .. } => "robust",
            PolicyKind::Misestimated { .. } => "misestimated",
        }
    }

    /// `(beta, gamma)` the controller believes in.
    pub fn assumed_rates(&self, truth: &EpidemicParams) -> (f64, f64) {
        match *self {
            PolicyKind::Optimal => (truth.beta, truth.gamma),
            PolicyKind::Robust { beta_max, gamma_min } => (beta_max, gamma_min),
            PolicyKind::Misestimated { beta, gamma } => (beta, gamma),
        }
    }

    /// `(S, I)` the controller acts on.
    pub fn perceived(&self, truth: &SirState, measured: (f64, f64), envelope: &Envelope) -> (f64, f64) {
        match self {
            PolicyKind::Optimal => (truth.s, truth.i),
            PolicyKind::Robust { .. } => (envelope.s_max, envelope.i_max),
            PolicyKind::Misestimated { .. } => measured,
        }
    }
}

/// Optimal three-stage rule on the true state: zero, then `βS - γ`, then zero.
pub fn optimal_rate(t: f64, state: &SirState, params: &EpidemicParams, times: &SwitchingTimes, bounds: &ControlBounds) -> f64 {
    match times.stage_at(t) {
        Stage::Hold => bounds.clamp(params.beta * state.s - params.gamma).0,
        _ => 0.0,
    }
}

/// Robust rule `β̂_max Ŝ_max - γ̂_min` during the hold stage. Returns the clamped
/// rate and whether clamping occurred.
pub fn robust_rate(
    t: f64,
    envelope: &Envelope,
    beta_max: f64,
    gamma_min: f64,
    times: &SwitchingTimes,
    bounds: &ControlBounds,
) -> (f64, bool) {
    match times.stage_at(t) {
        Stage::Hold => bounds.clamp(beta_max * envelope.s_max - gamma_min),
        _ => (0.0, false),
    }
}

/// Existence condition for holding infections at the threshold from `t_b` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCondition {
    pub required_rate: f64,
    pub u_max: f64,
    pub feasible: bool,
}

/// Rate `βS(t_b) - γ` needed to stop growth at the threshold-reach time, and
/// whether it fits under `u_max`. A non-positive requirement is trivially met.
pub fn feasibility_check(params: &EpidemicParams, state_at_tb: &SirState, u_max: f64) -> RateCondition {
    let required_rate = params.beta * state_at_tb.s - params.gamma;
    RateCondition { required_rate, u_max, feasible: required_rate <= u_max }
}
