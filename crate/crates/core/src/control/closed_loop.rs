//! Closed-loop simulation of the true dynamics under a switching policy.
//!
//! The controller reads a [`Sensor`] at every measurement epoch and at every
//! switching event, and holds its rate in between. Switching events are
//! located by bisection inside the integration step where they occur and are
//! inserted into the trajectory as extra nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::bounds::{Measurement, Sensor, StateBounds};
use crate::control::policy::{feasibility_check, PolicyKind, RateCondition, Stage, SwitchingTimes};
use crate::events::bisect;
use crate::integrate::{advance, IntegrateError, IntegratorConfig, Trajectory, TrajectorySample};
use crate::model::{ControlBounds, EpidemicParams, SirState};

/// Slack on the infection threshold when judging feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedLoopError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("infection threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("measurement interval must be at least one step")]
    InvalidInterval,
    #[error("policy rates must be positive, got beta={beta}, gamma={gamma}")]
    InvalidPolicyRates { beta: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopConfig {
    pub i_bar: f64,
    pub bounds: ControlBounds,
    pub integrator: IntegratorConfig,
    /// Integration steps between measurement reads.
    pub measurement_interval: usize,
}

impl ClosedLoopConfig {
    pub fn validate(&self) -> Result<(), ClosedLoopError> {
        self.integrator.validate()?;
        if !(self.i_bar > 0.0 && self.i_bar < 1.0) {
            return Err(ClosedLoopError::InvalidThreshold(self.i_bar));
        }
        if self.measurement_interval == 0 {
            return Err(ClosedLoopError::InvalidInterval);
        }
        Ok(())
    }
}

/// Applied rate and stage at every trajectory node.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyTrace {
    pub times: Vec<f64>,
    pub rates: Vec<f64>,
    pub stages: Vec<Stage>,
    pub switching: SwitchingTimes,
    pub clamp_events: usize,
}

impl PolicyTrace {
    /// Rate in force at `t` (held from the last node at or before `t`).
    pub fn rate_at(&self, t: f64) -> Option<f64> {
        let (&first, &last) = (self.times.first()?, self.times.last()?);
        if t < first || t > last {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t).saturating_sub(1);
        Some(self.rates[k])
    }

    pub fn final_rate(&self) -> Option<f64> {
        self.rates.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub i_bar: f64,
    pub max_infection_attained: f64,
    pub u_max: f64,
    pub clamp_events: usize,
    /// Rate needed at this run's threshold-reach time, from the true state.
    pub rate_condition: Option<RateCondition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub kind: PolicyKind,
    pub trajectory: Trajectory,
    pub measured: Vec<Measurement>,
    pub envelope: StateBounds,
    pub trace: PolicyTrace,
    pub feasibility: FeasibilityReport,
}

struct Controller<'a, S: Sensor> {
    kind: PolicyKind,
    beta: f64,
    gamma: f64,
    sensor: &'a S,
    i_bar: f64,
    bounds: ControlBounds,
}

impl<S: Sensor> Controller<'_, S> {
    fn perceived(&self, x: &SirState) -> (Measurement, (f64, f64)) {
        let m = self.sensor.measure(x.t, x);
        let view = self.kind.perceived(x, (m.s_hat, m.i_hat), &m.envelope());
        (m, view)
    }

    fn threshold_event(&self, x: &SirState) -> f64 {
        self.perceived(x).1 .1 - self.i_bar
    }

    fn herd_event(&self, x: &SirState) -> f64 {
        self.gamma - self.beta * self.perceived(x).1 .0
    }

    /// Event function for leaving `stage`; non-negative once it fired.
    fn exit_event(&self, stage: Stage, x: &SirState) -> f64 {
        match stage {
            Stage::Growth => self.threshold_event(x).max(self.herd_event(x)),
            Stage::Hold => self.herd_event(x),
            Stage::Release => f64::NEG_INFINITY,
        }
    }

    /// Apply every transition that has fired at `x`, recording switching times.
    fn settle(&self, mut stage: Stage, x: &SirState, times: &mut SwitchingTimes) -> Stage {
        if stage == Stage::Growth && self.threshold_event(x) >= 0.0 {
            stage = Stage::Hold;
            times.t_b = Some(x.t);
        }
        if stage != Stage::Release && self.herd_event(x) >= 0.0 {
            stage = Stage::Release;
            times.t_h = Some(x.t);
        }
        stage
    }

    /// Clamped rate, raw-rate clamp flag and the measurement it was based on.
    fn rate(&self, stage: Stage, x: &SirState) -> (f64, bool, Measurement) {
        let (m, (s_eff, _)) = self.perceived(x);
        match stage {
            Stage::Hold => {
                let (u, clamped) = self.bounds.clamp(self.beta * s_eff - self.gamma);
                (u, clamped, m)
            }
            _ => (0.0, false, m),
        }
    }
}

struct Recorder {
    trajectory: Trajectory,
    measured: Vec<Measurement>,
    envelope: StateBounds,
    trace: PolicyTrace,
}

impl Recorder {
    fn push(&mut self, x: SirState, u: f64, stage: Stage, m: Measurement) {
        self.trajectory.samples.push(TrajectorySample { state: x, u });
        self.measured.push(m);
        self.envelope.push(x.t, m.envelope());
        self.trace.times.push(x.t);
        self.trace.rates.push(u);
        self.trace.stages.push(stage);
    }
}

/// Run the true dynamics from `init` under the policy `kind`, with the
/// controller observing the system through `sensor`.
pub fn simulate_closed_loop<S: Sensor>(
    kind: PolicyKind,
    true_params: &EpidemicParams,
    init: &SirState,
    sensor: &S,
    cfg: &ClosedLoopConfig,
) -> Result<ClosedLoopRun, ClosedLoopError> {
    cfg.validate()?;
    if !init.is_valid() {
        return Err(IntegrateError::InvalidInit(*init).into());
    }
    let (beta, gamma) = kind.assumed_rates(true_params);
    if !(beta > 0.0 && gamma > 0.0) {
        return Err(ClosedLoopError::InvalidPolicyRates { beta, gamma });
    }
    let ctl = Controller { kind, beta, gamma, sensor, i_bar: cfg.i_bar, bounds: cfg.bounds };
    let method = cfg.integrator.method;
    let n = cfg.integrator.n_steps();
    let mut rec = Recorder {
        trajectory: Trajectory::new(*true_params, method, cfg.integrator.step),
        measured: Vec::with_capacity(n + 1),
        envelope: StateBounds::default(),
        trace: PolicyTrace::default(),
    };

    let mut switching = SwitchingTimes::default();
    let mut x = *init;
    let mut stage = ctl.settle(Stage::Growth, &x, &mut switching);
    let (mut u, clamped, m) = ctl.rate(stage, &x);
    let mut clamp_events = usize::from(clamped);
    rec.push(x, u, stage, m);

    for k in 1..=n {
        let t_next = cfg.integrator.grid_time(init.t, k);
        loop {
            let dt = t_next - x.t;
            let step_to = |tau: f64| SirState::from_array(x.t + tau, advance(method, x.as_array(), true_params, u, tau));
            let mut x_new = step_to(dt);
            x_new.t = t_next;
            if !x_new.is_finite() {
                return Err(IntegrateError::NonFiniteState { t: t_next, u }.into());
            }
            if stage == Stage::Release || ctl.exit_event(stage, &x_new) < 0.0 {
                x = x_new;
                let (rate, clamped, m) = ctl.rate(stage, &x);
                if k % cfg.measurement_interval == 0 {
                    u = rate;
                    clamp_events += usize::from(clamped);
                }
                rec.push(x, u, stage, m);
                break;
            }
            let tau = bisect(|tau| ctl.exit_event(stage, &step_to(tau)), 0.0, dt);
            let at_grid = dt - tau <= 1e-12 * t_next.abs().max(1.0);
            let x_event = if at_grid { x_new } else { step_to(tau) };
            stage = ctl.settle(stage, &x_event, &mut switching);
            let (rate, clamped, m) = ctl.rate(stage, &x_event);
            u = rate;
            clamp_events += usize::from(clamped);
            x = x_event;
            rec.push(x, u, stage, m);
            if at_grid {
                break;
            }
        }
    }

    rec.trace.switching = switching;
    rec.trace.clamp_events = clamp_events;
    let max_infection_attained = rec.trajectory.max_infection();
    let rate_condition = switching
        .t_b
        .and_then(|tb| rec.trajectory.state_at(tb))
        .map(|xb| feasibility_check(true_params, &xb, cfg.bounds.u_max));
    let feasibility = FeasibilityReport {
        feasible: max_infection_attained <= cfg.i_bar + FEASIBILITY_TOL,
        i_bar: cfg.i_bar,
        max_infection_attained,
        u_max: cfg.bounds.u_max,
        clamp_events,
        rate_condition,
    };
    Ok(ClosedLoopRun {
        kind,
        trajectory: rec.trajectory,
        measured: rec.measured,
        envelope: rec.envelope,
        trace: rec.trace,
        feasibility,
    })
}
