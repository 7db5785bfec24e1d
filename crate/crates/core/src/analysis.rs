//! Isolation cost and optimality-gap accounting between a robust run and
//! the optimal run of the same scenario.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{PolicyTrace, StateBounds, SwitchingTimes};
use crate::integrate::Trajectory;
use crate::model::EpidemicParams;

/// Smallest infected fraction accepted inside a logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

const ORDER_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("traces start at different times ({0} vs {1})")]
    GridMismatch(f64, f64),
    #[error("empty trace or trajectory")]
    Empty,
    #[error("time {0} lies outside the covered span")]
    OutOfRange(f64),
    #[error("infected fraction {i:e} at t={t} is too small for the log terms")]
    InfectionTooSmall { t: f64, i: f64 },
    #[error("switching times out of order: {0:?}")]
    InvertedOrdering(GapTimes),
    #[error("robust run never reached the infection threshold")]
    NoThresholdReach,
}

/// `∫ u dt` of a held-rate trace: each node's rate times the interval it
/// governs.
pub fn total_cost(trace: &PolicyTrace) -> f64 {
    let end = trace.times.last().copied().unwrap_or(0.0);
    let cost = cost_until(trace, end);
    if let Some(u) = trace.final_rate().filter(|&u| u != 0.0) {
        log::warn!("isolation rate {u} still active at horizon end t={end}; cost is truncated");
    }
    cost
}

fn cost_until(trace: &PolicyTrace, end: f64) -> f64 {
    trace
        .times
        .windows(2)
        .zip(&trace.rates)
        .take_while(|(w, _)| w[0] < end)
        .map(|(w, u)| u * (w[1].min(end) - w[0]))
        .sum()
}

/// `∫ (û - u*) dt` over the span both traces cover.
pub fn gap_direct(trace_robust: &PolicyTrace, trace_optimal: &PolicyTrace) -> Result<f64, AnalysisError> {
    let (r0, o0) = match (trace_robust.times.first(), trace_optimal.times.first()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(AnalysisError::Empty),
    };
    if (r0 - o0).abs() > ORDER_SLACK * r0.abs().max(1.0) {
        return Err(AnalysisError::GridMismatch(r0, o0));
    }
    let end = trace_robust.times.last().unwrap().min(*trace_optimal.times.last().unwrap());
    Ok(cost_until(trace_robust, end) - cost_until(trace_optimal, end))
}

/// Sorted, deduplicated union of node times inside `[lo, hi]`, including both ends.
fn merged_nodes(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>, lo: f64, hi: f64) -> Vec<f64> {
    let mut nodes: Vec<f64> = a.chain(b).filter(|&t| t > lo && t < hi).collect();
    nodes.push(lo);
    nodes.push(hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

fn trapezoid(nodes: &[f64], mut f: impl FnMut(f64) -> Result<f64, AnalysisError>) -> Result<f64, AnalysisError> {
    let mut total = 0.0;
    let mut prev = match nodes.first() {
        Some(&t) => (t, f(t)?),
        None => return Ok(0.0),
    };
    for &t in &nodes[1..] {
        let y = f(t)?;
        total += 0.5 * (t - prev.0) * (y + prev.1);
        prev = (t, y);
    }
    Ok(total)
}

fn susceptible(traj: &Trajectory, t: f64) -> Result<f64, AnalysisError> {
    traj.state_at(t).map(|x| x.s).ok_or(AnalysisError::OutOfRange(t))
}

/// Gap from the state trajectories alone:
/// `∫ β (S - S*) dt - ln I(upper) + ln I*(upper)` over `[t̂_b, upper]`.
pub fn gap_lemma4(
    traj_robust: &Trajectory,
    traj_optimal: &Trajectory,
    beta: f64,
    t_b_hat: f64,
    upper: f64,
) -> Result<f64, AnalysisError> {
    let nodes = merged_nodes(traj_robust.times(), traj_optimal.times(), t_b_hat, upper);
    let integral = trapezoid(&nodes, |t| Ok(beta * (susceptible(traj_robust, t)? - susceptible(traj_optimal, t)?)))?;
    let log_i = |traj: &Trajectory| {
        let i = traj.state_at(upper).ok_or(AnalysisError::OutOfRange(upper))?.i;
        if i < LOG_FLOOR {
            return Err(AnalysisError::InfectionTooSmall { t: upper, i });
        }
        Ok(i.ln())
    };
    Ok(integral - log_i(traj_robust)? + log_i(traj_optimal)?)
}

/// The four switching times of a matched robust/optimal pair. An unreached
/// herd-immunity time is replaced by the end of the common horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTimes {
    pub t_b_hat: f64,
    pub t_b_star: f64,
    pub t_h_star: f64,
    pub t_h_hat: f64,
}

impl GapTimes {
    pub fn from_runs(robust: &SwitchingTimes, optimal: &SwitchingTimes, horizon_end: f64) -> Result<Self, AnalysisError> {
        let t_b_hat = robust.t_b.ok_or(AnalysisError::NoThresholdReach)?;
        let t_b_star = optimal.t_b.unwrap_or(horizon_end);
        let t_h_star = optimal.t_h.unwrap_or(horizon_end).min(horizon_end);
        let t_h_hat = robust.t_h.unwrap_or(horizon_end).min(horizon_end);
        Ok(Self { t_b_hat, t_b_star, t_h_star, t_h_hat })
    }

    pub fn is_ordered(&self) -> bool {
        self.t_b_hat <= self.t_b_star + ORDER_SLACK
            && self.t_b_star <= self.t_h_star
            && self.t_h_star <= self.t_h_hat + ORDER_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thm4Gap {
    /// Piecewise integral over the three segments between the switching times.
    pub c: f64,
    /// Closed-form upper bound on `c`.
    pub c_upper: f64,
    /// Part of `c_upper` proportional to the switching-time offsets; zero when
    /// the robust run switches at the optimal times.
    pub interval_term: f64,
}

/// Gap expressed through the robust envelope and the optimal susceptible
/// series, together with its closed-form bound.
pub fn gap_thm4(
    bounds: &StateBounds,
    beta_max: f64,
    gamma_min: f64,
    params: &EpidemicParams,
    s_star: &Trajectory,
    times: &GapTimes,
) -> Result<Thm4Gap, AnalysisError> {
    if !times.is_ordered() {
        return Err(AnalysisError::InvertedOrdering(*times));
    }
    let GapTimes { t_b_hat, t_b_star, t_h_star, t_h_hat } = *times;
    let robust_rate = |t: f64| -> Result<f64, AnalysisError> {
        let e = bounds.at(t).ok_or(AnalysisError::OutOfRange(t))?;
        Ok(beta_max * e.s_max - gamma_min)
    };
    let optimal_rate = |t: f64| Ok(params.beta * susceptible(s_star, t)? - params.gamma);
    let nodes = |lo: f64, hi: f64| merged_nodes(bounds.times.iter().copied(), s_star.times(), lo, hi.max(lo));

    let lead = trapezoid(&nodes(t_b_hat, t_b_star.max(t_b_hat)), robust_rate)?;
    let middle = trapezoid(&nodes(t_b_star, t_h_star), |t| Ok(robust_rate(t)? - optimal_rate(t)?))?;
    let tail = trapezoid(&nodes(t_h_star.min(t_h_hat), t_h_hat), robust_rate)?;

    let onset = robust_rate(t_b_hat)?;
    let interval_term = onset * ((t_b_star - t_b_hat).max(0.0) + (t_h_hat - t_h_star).max(0.0));
    let c_upper = interval_term + (onset - optimal_rate(t_h_star)?) * (t_h_star - t_b_star);
    Ok(Thm4Gap { c: lead + middle + tail, c_upper, interval_term })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulativeReport {
    /// Largest excess of `I + R` over `I* + R*` on `[start, t*_h]`, floored at zero.
    pub max_violation: f64,
    pub worst_time: Option<f64>,
    pub holds: bool,
}

/// Checks that the robust run never has more cumulative infections than the
/// optimal run before the optimal herd-immunity time.
pub fn cumulative_infected_check(
    traj_robust: &Trajectory,
    traj_optimal: &Trajectory,
    t_h_star: f64,
) -> Result<CumulativeReport, AnalysisError> {
    let start = traj_robust.start_time().ok_or(AnalysisError::Empty)?;
    let nodes = merged_nodes(traj_robust.times(), traj_optimal.times(), start, t_h_star);
    let mut report = CumulativeReport { max_violation: 0.0, worst_time: None, holds: true };
    for t in nodes {
        let a = traj_robust.state_at(t).ok_or(AnalysisError::OutOfRange(t))?;
        let b = traj_optimal.state_at(t).ok_or(AnalysisError::OutOfRange(t))?;
        let excess = (a.i + a.r) - (b.i + b.r);
        if excess > report.max_violation {
            report.max_violation = excess;
            report.worst_time = Some(t);
        }
    }
    report.holds = report.max_violation <= 1e-6;
    Ok(report)
}

/// One row of a cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub policy: String,
    pub total_cost: f64,
    pub gap_direct: Option<f64>,
    pub gap_lemma4: Option<f64>,
    pub gap_thm4: Option<f64>,
    pub gap_upper: Option<f64>,
    pub t_b: Option<f64>,
    pub t_h: Option<f64>,
    pub feasible: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{Envelope, Stage};
    use crate::integrate::{integrate_constant, IntegratorConfig, Method, TrajectorySample};
    use crate::model::SirState;

    fn trace(times: &[f64], rates: &[f64]) -> PolicyTrace {
        PolicyTrace {
            times: times.to_vec(),
            rates: rates.to_vec(),
            stages: vec![Stage::Growth; times.len()],
            ..PolicyTrace::default()
        }
    }

    #[test]
    fn cost_of_rectangle() {
        assert_eq!(total_cost(&trace(&[0.0, 10.0, 20.0, 30.0], &[0.0, 0.0, 0.0, 0.0])), 0.0);
        let t = trace(&[0.0, 10.0, 20.0, 30.0], &[0.0, 0.1, 0.0, 0.0]);
        assert!((total_cost(&t) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn direct_gap_identical_and_mismatched() {
        let t = trace(&[0.0, 10.0, 20.0, 30.0], &[0.0, 0.1, 0.0, 0.0]);
        assert_eq!(gap_direct(&t, &t).unwrap(), 0.0);
        let shifted = trace(&[1.0, 10.0], &[0.0, 0.0]);
        assert!(matches!(gap_direct(&t, &shifted), Err(AnalysisError::GridMismatch(..))));
        let longer = trace(&[0.0, 10.0, 20.0, 30.0, 40.0], &[0.0, 0.2, 0.0, 0.0, 5.0]);
        assert!((gap_direct(&longer, &t).unwrap() - 1.0).abs() < 1e-15);
    }

    /// Stationary fixture: nodes at integer times with fixed `S` and `I`,
    /// and rates small enough that dense output between nodes is constant.
    fn frozen(s: f64, i: f64, t_end: usize) -> Trajectory {
        let p = EpidemicParams::new(1e-300, 1e-300).unwrap();
        let mut traj = Trajectory::new(p, Method::Euler, 1.0);
        for k in 0..=t_end {
            let state = SirState::new(k as f64, s, i, 1.0 - s - i).unwrap();
            traj.samples.push(TrajectorySample { state, u: 0.0 });
        }
        traj
    }

    #[test]
    fn trajectory_gap_hand_fixture() {
        let a = frozen(0.51, 0.05, 10);
        let b = frozen(0.5, 0.05, 10);
        let g = gap_lemma4(&a, &b, 0.16, 0.0, 10.0).unwrap();
        assert!((g - 0.016).abs() < 1e-12, "g = {g}");
        assert_eq!(gap_lemma4(&a, &a, 0.16, 0.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn trajectory_gap_rejects_vanishing_infection() {
        let a = frozen(0.5, 0.0, 5);
        assert!(matches!(gap_lemma4(&a, &a, 0.16, 0.0, 5.0), Err(AnalysisError::InfectionTooSmall { .. })));
    }

    #[test]
    fn piecewise_gap_zero_at_truth_and_ordering() {
        let p = EpidemicParams::new(0.16, 0.063).unwrap();
        let x0 = SirState::seeded(0.0, 0.01).unwrap();
        let cfg = IntegratorConfig::new(Method::Rk4, 0.1, 20.0).unwrap();
        let traj = integrate_constant(&p, 0.0, &x0, &cfg).unwrap();
        let mut bounds = StateBounds::default();
        for s in traj.states() {
            bounds.push(s.t, Envelope::around(s.s, s.i, 0.0, 0.0));
        }
        let times = GapTimes { t_b_hat: 5.0, t_b_star: 5.0, t_h_star: 15.0, t_h_hat: 15.0 };
        let g = gap_thm4(&bounds, p.beta, p.gamma, &p, &traj, &times).unwrap();
        assert!(g.c.abs() < 1e-12);
        assert_eq!(g.interval_term, 0.0);
        assert!(g.c <= g.c_upper);

        let inverted = GapTimes { t_b_hat: 6.0, ..times };
        assert!(matches!(
            gap_thm4(&bounds, p.beta, p.gamma, &p, &traj, &inverted),
            Err(AnalysisError::InvertedOrdering(_))
        ));
    }

    #[test]
    fn gap_times_fill_unreached_herd_time() {
        let robust = SwitchingTimes { t_b: Some(10.0), t_h: None };
        let optimal = SwitchingTimes { t_b: Some(12.0), t_h: Some(50.0) };
        let g = GapTimes::from_runs(&robust, &optimal, 100.0).unwrap();
        assert_eq!(g.t_h_hat, 100.0);
        assert!(g.is_ordered());
        assert!(GapTimes::from_runs(&SwitchingTimes::default(), &optimal, 100.0).is_err());
    }

    #[test]
    fn cumulative_check_identical_runs() {
        let p = EpidemicParams::new(0.16, 0.063).unwrap();
        let x0 = SirState::seeded(0.0, 0.01).unwrap();
        let cfg = IntegratorConfig::new(Method::Rk4, 0.1, 20.0).unwrap();
        let traj = integrate_constant(&p, 0.0, &x0, &cfg).unwrap();
        let rep = cumulative_infected_check(&traj, &traj, 20.0).unwrap();
        assert_eq!(rep.max_violation, 0.0);
        assert!(rep.holds);
        let faster = integrate_constant(&EpidemicParams::new(0.3, 0.063).unwrap(), 0.0, &x0, &cfg).unwrap();
        let rep = cumulative_infected_check(&faster, &traj, 20.0).unwrap();
        assert!(!rep.holds && rep.worst_time.is_some());
    }
}
