//! Fixed-step integration of the controlled SIR system.
//!
//! The control rate is sampled once at the start of every step and held
//! constant across it (zero-order hold). Trajectories remember the rate
//! applied on each interval, so the state at any intermediate time can be
//! recovered by re-taking a partial step from the left node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rhs_array, EpidemicParams, SirState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator config: step={step}, horizon={horizon}")]
    InvalidConfig { step: f64, horizon: f64 },
    #[error("invalid initial state: {0:?}")]
    InvalidInit(SirState),
    #[error("non-finite state at t={t} (control rate {u})")]
    NonFiniteState { t: f64, u: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub method: Method,
    pub step: f64,
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { method: Method::Rk4, step: 0.01, horizon: 1200.0 }
    }
}

impl IntegratorConfig {
    pub fn new(method: Method, step: f64, horizon: f64) -> Result<Self, IntegrateError> {
        let cfg = Self { method, step, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if self.step.is_finite() && self.step > 0.0 && self.horizon.is_finite() && self.horizon > 0.0 {
            Ok(())
        } else {
            Err(IntegrateError::InvalidConfig { step: self.step, horizon: self.horizon })
        }
    }

    /// Number of grid intervals; the last one is shortened if `horizon` is
    /// not a multiple of `step`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.horizon / self.step;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Time of grid node `k` for a run starting at `t0`.
    pub fn grid_time(&self, t0: f64, k: usize) -> f64 {
        if k >= self.n_steps() {
            t0 + self.horizon
        } else {
            t0 + k as f64 * self.step
        }
    }
}

pub(crate) fn advance(method: Method, x: [f64; 3], params: &EpidemicParams, u: f64, h: f64) -> [f64; 3] {
    match method {
        Method::Rk4 => rk4(x, params, u, h),
        Method::Euler => {
            let d = rhs_array(x, params, u);
            [x[0] + h * d[0], x[1] + h * d[1], x[2] + h * d[2]]
        }
    }
}

fn rk4(x: [f64; 3], params: &EpidemicParams, u: f64, h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = rhs_array(x, params, u);
    let k2 = rhs_array(add(x, k1, 0.5 * h), params, u);
    let k3 = rhs_array(add(x, k2, 0.5 * h), params, u);
    let k4 = rhs_array(add(x, k3, h), params, u);
    let mut out = x;
    for c in 0..3 {
        out[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    }
    out
}

/// A node of a trajectory: the state and the rate applied from this node
/// until the next one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub state: SirState,
    pub u: f64,
}

/// Time-ordered states of one run of the true dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: EpidemicParams,
    pub method: Method,
    pub step: f64,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(params: EpidemicParams, method: Method, step: f64) -> Self {
        Self { params, method, step, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.state.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.state.t)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.state.t)
    }

    pub fn states(&self) -> impl Iterator<Item = &SirState> + '_ {
        self.samples.iter().map(|s| &s.state)
    }

    pub fn final_state(&self) -> Option<&SirState> {
        self.samples.last().map(|s| &s.state)
    }

    pub fn max_infection(&self) -> f64 {
        self.states().map(|s| s.i).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the interval `[t_k, t_{k+1})` containing `t`, clamped to the
    /// last interval at the right end.
    pub fn interval_index(&self, t: f64) -> Option<usize> {
        let (first, last) = (self.start_time()?, self.end_time()?);
        if t < first || t > last || self.samples.len() < 2 {
            return if self.samples.len() == 1 && t == first { Some(0) } else { None };
        }
        let idx = self.samples.partition_point(|s| s.state.t <= t);
        Some(idx.saturating_sub(1).min(self.samples.len() - 2))
    }

    /// State at an arbitrary time inside the covered span, obtained by a
    /// partial step from the node on the left with that node's rate.
    pub fn state_at(&self, t: f64) -> Option<SirState> {
        let k = self.interval_index(t)?;
        let node = &self.samples[k];
        let tau = t - node.state.t;
        if tau == 0.0 {
            return Some(node.state);
        }
        Some(self.partial_step(k, tau))
    }

    pub(crate) fn partial_step(&self, k: usize, tau: f64) -> SirState {
        let node = &self.samples[k];
        let x = advance(self.method, node.state.as_array(), &self.params, node.u, tau);
        SirState::from_array(node.state.t + tau, x)
    }

    /// Checks ordering, state validity and rate range on every sample.
    pub fn validate(&self, u_max: f64) -> Result<(), String> {
        for (k, s) in self.samples.iter().enumerate() {
            if !s.state.is_valid() {
                return Err(format!("sample {k} invalid: {:?}", s.state));
            }
            if !(0.0..=u_max).contains(&s.u) {
                return Err(format!("sample {k} rate {} outside [0, {u_max}]", s.u));
            }
        }
        for (k, w) in self.samples.windows(2).enumerate() {
            if w[1].state.t <= w[0].state.t {
                return Err(format!("time stamps not increasing at sample {}", k + 1));
            }
        }
        Ok(())
    }
}

/// Integrate the true dynamics from `init` under an open-loop or
/// state-feedback rate.
///
/// `policy` is queried once per step at the left node; its value is held for
/// the whole step.
pub fn integrate<P>(
    params: &EpidemicParams,
    mut policy: P,
    init: &SirState,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError>
where
    P: FnMut(f64, &SirState) -> f64,
{
    config.validate()?;
    if !init.is_valid() {
        return Err(IntegrateError::InvalidInit(*init));
    }
    let n = config.n_steps();
    let mut traj = Trajectory::new(*params, config.method, config.step);
    traj.samples.reserve(n + 1);
    let mut state = *init;
    for k in 0..=n {
        let u = policy(state.t, &state);
        if !u.is_finite() {
            return Err(IntegrateError::NonFiniteState { t: state.t, u });
        }
        traj.samples.push(TrajectorySample { state, u });
        if k == n {
            break;
        }
        let t_next = config.grid_time(init.t, k + 1);
        let x = advance(config.method, state.as_array(), params, u, t_next - state.t);
        state = SirState::from_array(t_next, x);
        if !state.is_finite() {
            return Err(IntegrateError::NonFiniteState { t: t_next, u });
        }
    }
    Ok(traj)
}

/// Integrate with a constant rate.
pub fn integrate_constant(
    params: &EpidemicParams,
    u: f64,
    init: &SirState,
    config: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    integrate(params, |_, _| u, init, config)
}
