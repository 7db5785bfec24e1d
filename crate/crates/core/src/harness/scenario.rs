use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    cumulative_infected_check, gap_direct, gap_lemma4, gap_thm4, total_cost, CostReport, CumulativeReport, GapTimes,
    Thm4Gap,
};
use crate::control::{
    simulate_closed_loop, ClosedLoopError, ClosedLoopRun, FeasibilityReport, PerfectSensor, PolicyKind, Sensor, StateBounds,
};
use crate::estimation::{
    build_regressor_batch, composite_constant, error_bound_b, estimate_params, lipschitz_constant, param_intervals,
    BoundInputs, BoundTerms, EstimationError, MeasuredSample, ParamEstimate, ParamIntervals,
};
use crate::harness::config::{scenario_seed, ConfigError, RobustBounds, ScenarioConfig};
use crate::harness::noise::{signal_power, NoiseRealization};
use crate::integrate::{integrate_constant, IntegrateError, IntegratorConfig, Method, Trajectory};
use crate::model::{rhs, EpidemicParams};

const NOISE_STREAM: u64 = 1;
const ESTIMATION_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    ClosedLoop(#[from] ClosedLoopError),
    #[error("no usable sample step in the estimation sweep")]
    NoUsableEstimate,
}

/// Why a sweep row carries no estimate or no bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Singular,
    /// `zeta * h >= 1`; the estimate is reported without a bound.
    StepTooLarge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub alpha: usize,
    pub h: f64,
    pub beta_hat: f64,
    pub gamma_hat: f64,
    pub err_norm: f64,
    pub bound_b: f64,
    pub contained: bool,
    pub status: RowStatus,
    pub terms: Option<BoundTerms>,
    pub lambda_min: f64,
    pub v_max: f64,
}

impl EstimateRow {
    pub fn intervals(&self) -> Option<ParamIntervals> {
        (self.status == RowStatus::Ok).then(|| {
            param_intervals(&ParamEstimate { beta_hat: self.beta_hat, gamma_hat: self.gamma_hat }, self.bound_b)
        })
    }
}

/// One closed-loop run together with the row of the cost table it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub run: ClosedLoopRun,
    pub cost: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub seed: u64,
    pub robust_beta_max: f64,
    pub robust_gamma_min: f64,
    pub gap_times: Option<GapTimes>,
    pub thm4: Option<Thm4Gap>,
    pub cumulative: Option<CumulativeReport>,
    pub feasibility: Vec<(String, FeasibilityReport)>,
}

/// Everything one scenario produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub outcomes: Vec<PolicyOutcome>,
    pub estimates: Option<Vec<EstimateRow>>,
    pub summary: ScenarioSummary,
}

impl RunArtifacts {
    pub fn outcome(&self, policy: &str) -> Option<&PolicyOutcome> {
        self.outcomes.iter().find(|o| o.cost.policy == policy)
    }

    pub fn robust_feasible(&self) -> bool {
        self.outcome("robust").is_some_and(|o| o.run.feasibility.feasible)
    }
}

fn base_cost(run: &ClosedLoopRun) -> CostReport {
    CostReport {
        policy: run.kind.label().to_string(),
        total_cost: total_cost(&run.trace),
        gap_direct: None,
        gap_lemma4: None,
        gap_thm4: None,
        gap_upper: None,
        t_b: run.trace.switching.t_b,
        t_h: run.trace.switching.t_h,
        feasible: run.feasibility.feasible,
    }
}

/// Fill in measured columns of a run made with a different sensor.
fn remeasure<S: Sensor>(run: &mut ClosedLoopRun, sensor: &S) {
    run.envelope = StateBounds::default();
    for (slot, sample) in run.measured.iter_mut().zip(&run.trajectory.samples) {
        *slot = sensor.measure(sample.state.t, &sample.state);
        run.envelope.push(sample.state.t, slot.envelope());
    }
}

/// Gap of the robust run against the optimal one, all three ways.
pub fn robust_gaps(
    robust: &ClosedLoopRun,
    optimal: &ClosedLoopRun,
    params: &EpidemicParams,
) -> Result<(f64, f64, Thm4Gap, GapTimes), crate::analysis::AnalysisError> {
    let (beta_max, gamma_min) = robust.kind.assumed_rates(params);
    let end = robust.trajectory.end_time().unwrap_or(0.0).min(optimal.trajectory.end_time().unwrap_or(0.0));
    let times = GapTimes::from_runs(&robust.trace.switching, &optimal.trace.switching, end)?;
    let direct = gap_direct(&robust.trace, &optimal.trace)?;
    let lemma4 = gap_lemma4(&robust.trajectory, &optimal.trajectory, params.beta, times.t_b_hat, times.t_h_hat)?;
    let thm4 = gap_thm4(&robust.envelope, beta_max, gamma_min, params, &optimal.trajectory, &times)?;
    Ok((direct, lemma4, thm4, times))
}

fn robust_kind(cfg: &ScenarioConfig, estimates: Option<&[EstimateRow]>) -> Result<PolicyKind, ScenarioError> {
    match cfg.robust {
        RobustBounds::Inflation { beta_factor, gamma_factor } => Ok(PolicyKind::Robust {
            beta_max: cfg.params.beta * beta_factor,
            gamma_min: cfg.params.gamma * gamma_factor,
        }),
        RobustBounds::Estimated => {
            let best = estimates
                .into_iter()
                .flatten()
                .filter(|r| r.status == RowStatus::Ok)
                .min_by(|a, b| a.bound_b.total_cmp(&b.bound_b))
                .and_then(EstimateRow::intervals)
                .ok_or(ScenarioError::NoUsableEstimate)?;
            let (beta_max, gamma_min) = best.worst_case();
            if !(gamma_min > 0.0) {
                return Err(ScenarioError::NoUsableEstimate);
            }
            Ok(PolicyKind::Robust { beta_max, gamma_min })
        }
    }
}

/// Run the optimal, robust and (if configured) misestimated policies on the
/// same true dynamics and noise realisation.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts, ScenarioError> {
    cfg.validate()?;
    let loop_cfg = cfg.closed_loop()?;
    let estimates = match cfg.robust {
        RobustBounds::Estimated => Some(sweep_h(cfg)?),
        RobustBounds::Inflation { .. } => None,
    };

    let mut optimal = simulate_closed_loop(PolicyKind::Optimal, &cfg.params, &cfg.init, &PerfectSensor, &loop_cfg)?;
    let sensor = NoiseRealization::generate(
        &cfg.noise,
        cfg.init.t,
        cfg.integrator.step,
        cfg.integrator.n_steps() + 1,
        signal_power(&optimal.trajectory),
        scenario_seed(cfg.seed, NOISE_STREAM),
    );
    remeasure(&mut optimal, &sensor);

    let robust_kind = robust_kind(cfg, estimates.as_deref())?;
    let robust = simulate_closed_loop(robust_kind, &cfg.params, &cfg.init, &sensor, &loop_cfg)?;

    let mut summary = ScenarioSummary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        robust_beta_max: robust_kind.assumed_rates(&cfg.params).0,
        robust_gamma_min: robust_kind.assumed_rates(&cfg.params).1,
        gap_times: None,
        thm4: None,
        cumulative: None,
        feasibility: Vec::new(),
    };

    let mut robust_cost = base_cost(&robust);
    match robust_gaps(&robust, &optimal, &cfg.params) {
        Ok((direct, lemma4, thm4, times)) => {
            robust_cost.gap_direct = Some(direct);
            robust_cost.gap_lemma4 = Some(lemma4);
            robust_cost.gap_thm4 = Some(thm4.c);
            robust_cost.gap_upper = Some(thm4.c_upper);
            summary.gap_times = Some(times);
            summary.thm4 = Some(thm4);
        }
        Err(e) => log::warn!("robust gap not computed: {e}"),
    }
    if let Some(th) = optimal.trace.switching.t_h {
        summary.cumulative = cumulative_infected_check(&robust.trajectory, &optimal.trajectory, th)
            .map_err(|e| log::warn!("cumulative check skipped: {e}"))
            .ok();
    }

    let mut outcomes = vec![
        PolicyOutcome { cost: base_cost(&optimal), run: optimal },
        PolicyOutcome { cost: robust_cost, run: robust },
    ];
    if let Some(m) = cfg.misestimate {
        let kind = PolicyKind::Misestimated { beta: cfg.params.beta * m.beta_factor, gamma: cfg.params.gamma * m.gamma_factor };
        let run = simulate_closed_loop(kind, &cfg.params, &cfg.init, &sensor, &loop_cfg)?;
        let mut cost = base_cost(&run);
        cost.gap_direct = gap_direct(&run.trace, &outcomes[0].run.trace).ok();
        outcomes.push(PolicyOutcome { run, cost });
    }
    summary.feasibility = outcomes.iter().map(|o| (o.cost.policy.clone(), o.run.feasibility.clone())).collect();
    Ok(RunArtifacts { outcomes, estimates, summary })
}

/// Uncontrolled epidemic wave of a scenario, with the estimation horizon.
pub fn open_loop_wave(cfg: &ScenarioConfig) -> Result<Trajectory, ScenarioError> {
    let integ = IntegratorConfig::new(Method::Rk4, cfg.estimation.h_unit, cfg.estimation.required_horizon())?;
    Ok(integrate_constant(&cfg.params, 0.0, &cfg.init, &integ)?)
}

fn grid_index(t0: f64, t: f64, h_unit: f64) -> usize {
    ((t - t0) / h_unit).round().max(0.0) as usize
}

/// Estimate `(beta, gamma)` and the error bound for every sample step
/// `alpha * h_unit` in the configuration.
pub fn sweep_h(cfg: &ScenarioConfig) -> Result<Vec<EstimateRow>, ScenarioError> {
    cfg.validate()?;
    let est = &cfg.estimation;
    let wave = open_loop_wave(cfg)?;
    let t0 = wave.start_time().unwrap_or(0.0);
    let sensor = NoiseRealization::generate(
        &cfg.noise,
        t0,
        est.h_unit,
        wave.len(),
        signal_power(&wave),
        scenario_seed(cfg.seed, ESTIMATION_STREAM),
    );
    let (ki, kj) = (grid_index(t0, est.t_i, est.h_unit), grid_index(t0, est.t_j, est.h_unit));
    Ok(est.alphas.iter().map(|&alpha| sweep_row(cfg, &wave, &sensor, ki, kj, alpha)).collect())
}

fn sweep_row(
    cfg: &ScenarioConfig,
    wave: &Trajectory,
    sensor: &NoiseRealization,
    ki: usize,
    kj: usize,
    alpha: usize,
) -> EstimateRow {
    let params = &cfg.params;
    let h = alpha as f64 * cfg.estimation.h_unit;
    let sample = |k: usize| {
        let node = &wave.samples[k];
        let m = sensor.measure(node.state.t, &node.state);
        (MeasuredSample { t: node.state.t, s_hat: m.s_hat, i_hat: m.i_hat, u: node.u }, m.amp_s.max(m.amp_i))
    };
    let picks = [sample(ki), sample(ki + alpha), sample(kj), sample(kj + alpha)];
    let v_max = picks.iter().map(|p| p.1).fold(0.0, f64::max);
    let [si, si_next, sj, sj_next] = picks.map(|p| p.0);
    let mut row = EstimateRow {
        alpha,
        h,
        beta_hat: f64::NAN,
        gamma_hat: f64::NAN,
        err_norm: f64::NAN,
        bound_b: f64::NAN,
        contained: false,
        status: RowStatus::Singular,
        terms: None,
        lambda_min: f64::NAN,
        v_max,
    };
    // sample steps are exact grid multiples, so pass the realised spacing
    let batch = match build_regressor_batch(&si, &si_next, &sj, &sj_next, si_next.t - si.t) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("alpha={alpha}: {e}");
            return row;
        }
    };
    row.lambda_min = batch.lambda_min();
    let Ok(estimate) = estimate_params(&batch) else {
        log::warn!("alpha={alpha}: singular regressors");
        return row;
    };
    row.beta_hat = estimate.beta_hat;
    row.gamma_hat = estimate.gamma_hat;
    row.err_norm = estimate.error_norm(params);

    let windows = [(ki, ki + alpha), (kj, kj + alpha)];
    let window_states = windows.iter().flat_map(|&(a, b)| wave.samples[a..=b].iter());
    let (mut f_max, mut x_max, mut u_max_local) = (0.0f64, 0.0f64, 0.0f64);
    for s in window_states {
        f_max = f_max.max(rhs(&s.state, params, s.u).norm());
        x_max = x_max.max(s.state.norm());
        u_max_local = u_max_local.max(s.u.abs());
    }
    let zeta = cfg
        .estimation
        .zeta
        .unwrap_or_else(|| lipschitz_constant(params.beta, params.gamma, std::f64::consts::SQRT_2, cfg.estimation.r, u_max_local));
    let inputs = BoundInputs {
        h: batch.h,
        zeta,
        f_max,
        v_max,
        u_max_local,
        x_max,
        r: cfg.estimation.r,
        c: composite_constant(params, u_max_local, v_max, &si, &sj),
        lambda_min: row.lambda_min,
    };
    match error_bound_b(&inputs) {
        Ok(terms) => {
            row.bound_b = terms.total();
            row.terms = Some(terms);
            row.contained = row.err_norm <= row.bound_b;
            row.status = RowStatus::Ok;
        }
        Err(EstimationError::StepTooLarge(zh)) => {
            log::warn!("alpha={alpha}: zeta*h={zh} outside the bound's validity");
            row.status = RowStatus::StepTooLarge;
        }
        Err(e) => log::warn!("alpha={alpha}: {e}"),
    }
    row
}

/// Robust-policy cost row for one symmetric inflation `x`
/// (`beta * (1 + x)`, `gamma * (1 - x)`).
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub inflation: f64,
    pub cost: CostReport,
}

fn gap_row(base: &ScenarioConfig, id: usize, inflation: f64) -> Result<GapRow, ScenarioError> {
    let mut cfg = base.clone();
    cfg.robust = RobustBounds::Inflation { beta_factor: 1.0 + inflation, gamma_factor: 1.0 - inflation };
    cfg.misestimate = None;
    cfg.seed = scenario_seed(base.seed, id as u64);
    let artifacts = run_scenario(&cfg)?;
    let mut cost = artifacts.outcome("robust").expect("robust run present").cost.clone();
    cost.policy = format!("robust[{inflation}]");
    Ok(GapRow { inflation, cost })
}

/// Optimality gap of the robust policy over a grid of inflations; the
/// scenarios are independent and may run in parallel.
pub fn gap_grid(base: &ScenarioConfig, inflations: &[f64], parallel: bool) -> Result<Vec<GapRow>, ScenarioError> {
    if parallel {
        inflations.par_iter().enumerate().map(|(id, &x)| gap_row(base, id, x)).collect()
    } else {
        inflations.iter().enumerate().map(|(id, &x)| gap_row(base, id, x)).collect()
    }
}

/// Open-loop run with measured columns, for scenarios without control.
pub fn open_loop_run(cfg: &ScenarioConfig) -> Result<(Trajectory, Vec<MeasuredSample>), ScenarioError> {
    cfg.validate()?;
    let traj = integrate_constant(&cfg.params, 0.0, &cfg.init, &cfg.integrator)?;
    let (measured, _) = crate::harness::noise::inject_noise(&traj, &cfg.noise, scenario_seed(cfg.seed, NOISE_STREAM));
    Ok((traj, measured))
}

