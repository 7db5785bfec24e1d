//! Two-sample least-squares identification of `(beta, gamma)` and its error
//! bound.
//!
//! From the discretised infection equation, every base time `t` gives one
//! scalar observation
//!
//! ```text
//! l(t) = Î(t+h) - Î(t) + h u(t) Î(t) ≈ h [beta gamma] · [Ŝ(t)Î(t), -Î(t)]
//! ```
//!
//! Two base times produce a row `L` and a square regressor `Z`; the estimate
//! is `L Zᵀ (Z Zᵀ)⁻¹ / h`.

use nalgebra::{Matrix2, RowVector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EpidemicParams, SirState};

/// Relative eigenvalue floor of `Z Zᵀ` below which the regressors count as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("sample at t={got} does not sit one step h={h} after t={base}")]
    MismatchedTimes { base: f64, got: f64, h: f64 },
    #[error("the two base times coincide (t={0})")]
    DuplicateBaseTimes(f64),
    #[error("sample step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("singular regressors: lambda_min={lambda_min:e}, lambda_max={lambda_max:e}")]
    SingularRegressors { lambda_min: f64, lambda_max: f64 },
    #[error("zeta*h = {0} is not below 1")]
    StepTooLarge(f64),
    #[error("lambda_min must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("bound inputs must be finite and non-negative: {0}")]
    InvalidBoundInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSample {
    pub t: f64,
    pub s_hat: f64,
    pub i_hat: f64,
    /// Rate held over `[t, t + h)`.
    pub u: f64,
}

impl MeasuredSample {
    pub fn exact(state: &SirState, u: f64) -> Self {
        Self { t: state.t, s_hat: state.s, i_hat: state.i, u }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBatch {
    pub l: RowVector2<f64>,
    /// Columns are the regressors `[ŜÎ, -Î]` at the two base times.
    pub z: Matrix2<f64>,
    pub h: f64,
    pub base_times: (f64, f64),
}

fn check_step(base: &MeasuredSample, next: &MeasuredSample, h: f64) -> Result<(), EstimationError> {
    let expected = base.t + h;
    if (next.t - expected).abs() > TIME_MATCH_TOL * expected.abs().max(1.0) {
        return Err(EstimationError::MismatchedTimes { base: base.t, got: next.t, h });
    }
    Ok(())
}

fn observation(base: &MeasuredSample, next: &MeasuredSample, h: f64) -> f64 {
    next.i_hat - base.i_hat + h * base.u * base.i_hat
}

pub fn build_regressor_batch(
    sample_i: &MeasuredSample,
    sample_i_next: &MeasuredSample,
    sample_j: &MeasuredSample,
    sample_j_next: &MeasuredSample,
    h: f64,
) -> Result<RegressionBatch, EstimationError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(EstimationError::NonPositiveStep(h));
    }
    if sample_i.t == sample_j.t {
        return Err(EstimationError::DuplicateBaseTimes(sample_i.t));
    }
    check_step(sample_i, sample_i_next, h)?;
    check_step(sample_j, sample_j_next, h)?;
    let column = |s: &MeasuredSample| [s.s_hat * s.i_hat, -s.i_hat];
    let (zi, zj) = (column(sample_i), column(sample_j));
    Ok(RegressionBatch {
        l: RowVector2::new(observation(sample_i, sample_i_next, h), observation(sample_j, sample_j_next, h)),
        z: Matrix2::new(zi[0], zj[0], zi[1], zj[1]),
        h,
        base_times: (sample_i.t, sample_j.t),
    })
}

/// Eigenvalues `(min, max)` of a symmetric 2×2 matrix.
fn sym_eigen(m: &Matrix2<f64>) -> (f64, f64) {
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - radius, mean + radius)
}

impl RegressionBatch {
    pub fn gram(&self) -> Matrix2<f64> {
        self.z * self.z.transpose()
    }

    /// `(λ_min, λ_max)` of `Z Zᵀ`.
    pub fn gram_eigenvalues(&self) -> (f64, f64) {
        sym_eigen(&self.gram())
    }

    pub fn lambda_min(&self) -> f64 {
        self.gram_eigenvalues().0
    }

    /// `Zᵀ (Z Zᵀ)⁻¹`, failing on singular regressors.
    ///
    /// `Z` is square, so this is `Z⁻¹`; inverting `Z` directly avoids
    /// squaring its condition number.
    pub fn right_inverse(&self) -> Result<Matrix2<f64>, EstimationError> {
        let (lambda_min, lambda_max) = self.gram_eigenvalues();
        if !(lambda_min > SINGULAR_RATIO * lambda_max) || lambda_max <= 0.0 {
            return Err(EstimationError::SingularRegressors { lambda_min, lambda_max });
        }
        self.z.try_inverse().ok_or(EstimationError::SingularRegressors { lambda_min, lambda_max })
    }

    /// Spectral norm of `Zᵀ (Z Zᵀ)⁻¹`.
    pub fn right_inverse_norm(&self) -> Result<f64, EstimationError> {
        let m = self.right_inverse()?;
        Ok(sym_eigen(&(m.transpose() * m)).1.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub beta_hat: f64,
    pub gamma_hat: f64,
}

impl ParamEstimate {
    /// Noise can drive either estimate below zero; such values are kept as-is.
    pub fn has_negative(&self) -> bool {
        self.beta_hat < 0.0 || self.gamma_hat < 0.0
    }

    pub fn error_norm(&self, truth: &EpidemicParams) -> f64 {
        (self.beta_hat - truth.beta).hypot(self.gamma_hat - truth.gamma)
    }

    pub fn as_row(&self) -> RowVector2<f64> {
        RowVector2::new(self.beta_hat, self.gamma_hat)
    }
}

pub fn estimate_params(batch: &RegressionBatch) -> Result<ParamEstimate, EstimationError> {
    let theta = batch.l * batch.right_inverse()? / batch.h;
    if !theta.iter().all(|x| x.is_finite()) {
        let (lambda_min, lambda_max) = batch.gram_eigenvalues();
        return Err(EstimationError::SingularRegressors { lambda_min, lambda_max });
    }
    Ok(ParamEstimate { beta_hat: theta[0], gamma_hat: theta[1] })
}

/// Jacobian-norm bound `4 β (x_max + r) + 2 u_max + 2 γ` of the dynamics on a
/// ball of radius `r` around states of norm at most `x_max`.
pub fn lipschitz_constant(beta: f64, gamma: f64, x_max: f64, r: f64, u_max_local: f64) -> f64 {
    4.0 * beta * (x_max + r) + 2.0 * u_max_local + 2.0 * gamma
}

/// One-step Euler error bound `h² ζ ‖f‖ / (1 - ζ h)` under a zero-order hold.
pub fn discretization_error_bound(h: f64, zeta: f64, f_norm: f64) -> Result<f64, EstimationError> {
    let zh = zeta * h;
    if zh >= 1.0 {
        return Err(EstimationError::StepTooLarge(zh));
    }
    Ok(h * h * zeta * f_norm / (1.0 - zh))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub h: f64,
    pub zeta: f64,
    pub f_max: f64,
    pub v_max: f64,
    pub u_max_local: f64,
    pub x_max: f64,
    pub r: f64,
    pub c: f64,
    pub lambda_min: f64,
}

/// The coupling constant multiplying `v_max` in the bound:
/// `2 u_max + 2 γ + β (|Ŝ_i| + |Ŝ_j| + 2 v_max + |Î_i| + |Î_j|)`.
pub fn composite_constant(
    params: &EpidemicParams,
    u_max_local: f64,
    v_max: f64,
    sample_i: &MeasuredSample,
    sample_j: &MeasuredSample,
) -> f64 {
    let mass = sample_i.s_hat.abs() + sample_j.s_hat.abs() + sample_i.i_hat.abs() + sample_j.i_hat.abs();
    2.0 * u_max_local + 2.0 * params.gamma + params.beta * (mass + 2.0 * v_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    /// Sampling error, `2 h ζ f_max / (√λ (1 - ζ h))`.
    pub discretization: f64,
    /// Differencing of noisy samples, `4 v_max / (h √λ)`.
    pub differencing: f64,
    /// Noise entering through the regressors, `v_max c / √λ`.
    pub coupling: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.discretization + self.differencing + self.coupling
    }
}

pub fn error_bound_b(inputs: &BoundInputs) -> Result<BoundTerms, EstimationError> {
    let BoundInputs { h, zeta, f_max, v_max, c, lambda_min, .. } = *inputs;
    if !(lambda_min > 0.0) {
        return Err(EstimationError::NonPositiveLambda(lambda_min));
    }
    if !(h > 0.0) {
        return Err(EstimationError::NonPositiveStep(h));
    }
    let named = [("zeta", zeta), ("f_max", f_max), ("v_max", v_max), ("c", c)];
    if let Some((name, _)) = named.iter().find(|(_, x)| !(x.is_finite() && *x >= 0.0)) {
        return Err(EstimationError::InvalidBoundInput(name));
    }
    let zh = zeta * h;
    if zh >= 1.0 {
        return Err(EstimationError::StepTooLarge(zh));
    }
    let root = lambda_min.sqrt();
    Ok(BoundTerms {
        discretization: 2.0 * h * zeta * f_max / (root * (1.0 - zh)),
        differencing: 4.0 * v_max / (h * root),
        coupling: v_max * c / root,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamIntervals {
    pub b: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl ParamIntervals {
    pub fn contains(&self, params: &EpidemicParams) -> bool {
        (self.beta_lo..=self.beta_hi).contains(&params.beta) && (self.gamma_lo..=self.gamma_hi).contains(&params.gamma)
    }

    /// Worst-case pair for the robust policy: largest transmission, smallest removal.
    pub fn worst_case(&self) -> (f64, f64) {
        (self.beta_hi, self.gamma_lo)
    }
}

pub fn param_intervals(est: &ParamEstimate, b: f64) -> ParamIntervals {
    debug_assert!(b >= 0.0);
    ParamIntervals {
        b,
        beta_lo: est.beta_hat - b,
        beta_hi: est.beta_hat + b,
        gamma_lo: est.gamma_hat - b,
        gamma_hi: est.gamma_hat + b,
    }
}

/// Local error of the Euler prediction for the infected fraction:
/// the true `I(t+h)` minus `I + h β S I - h (γ + u) I`.
pub fn discretization_residual(params: &EpidemicParams, now: &SirState, next: &SirState, u: f64) -> f64 {
    let h = next.t - now.t;
    let predicted = now.i + h * params.beta * now.s * now.i - h * (params.gamma + u) * now.i;
    next.i - predicted
}

/// Noise contribution to one observation, given the true state at `t` and the
/// additive noise `(v_S(t), v_I(t))`, `v_I(t+h)`.
pub fn aggregated_measurement_error(
    params: &EpidemicParams,
    truth: &SirState,
    noise_now: (f64, f64),
    noise_i_next: f64,
    u: f64,
    h: f64,
) -> f64 {
    let (v_s, v_i) = noise_now;
    let s_hat = truth.s + v_s;
    let i_hat = truth.i + v_i;
    let product_gap = s_hat * v_i + v_s * i_hat - v_s * v_i;
    noise_i_next - v_i + h * u * v_i - h * params.beta * product_gap + h * params.gamma * v_i
}

/// `(E + W) Zᵀ (Z Zᵀ)⁻¹ / h`, the estimation error predicted from known
/// discretisation and noise terms.
pub fn reconstruct_error(
    batch: &RegressionBatch,
    discretization: [f64; 2],
    noise: [f64; 2],
) -> Result<RowVector2<f64>, EstimationError> {
    let total = RowVector2::new(discretization[0] + noise[0], discretization[1] + noise[1]);
    Ok(total * batch.right_inverse()? / batch.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::euler_step;
    use proptest::prelude::*;

    fn truth() -> EpidemicParams {
        EpidemicParams::new(0.16, 1.0 / 30.0).unwrap()
    }

    fn euler_pair(state: SirState, params: &EpidemicParams, u: f64, h: f64) -> (MeasuredSample, MeasuredSample) {
        let next = euler_step(&state, params, u, h);
        (MeasuredSample::exact(&state, u), MeasuredSample::exact(&next, u))
    }

    fn euler_batch(params: &EpidemicParams, a: SirState, b: SirState, u: (f64, f64), h: f64) -> RegressionBatch {
        let (i0, i1) = euler_pair(a, params, u.0, h);
        let (j0, j1) = euler_pair(b, params, u.1, h);
        build_regressor_batch(&i0, &i1, &j0, &j1, h).unwrap()
    }

    #[test]
    fn lipschitz_hand_values() {
        assert_eq!(lipschitz_constant(0.0, 0.0, 1.0, 0.1, 0.0), 0.0);
        let zeta = lipschitz_constant(0.16, 1.0 / 30.0, 1.0, 0.1, 0.0);
        assert!((zeta - 0.770_666_7).abs() < 1e-6);
    }

    #[test]
    fn discretization_bound_hand_value_and_validity() {
        let b = discretization_error_bound(1.0, 0.055, 0.05).unwrap();
        assert!((b - 0.055 * 0.05 / 0.945).abs() < 1e-15);
        assert!((b - 0.00291).abs() < 1e-5);
        assert!(matches!(discretization_error_bound(20.0, 0.055, 0.05), Err(EstimationError::StepTooLarge(_))));
        let small = discretization_error_bound(1e-3, 0.055, 0.05).unwrap();
        let smaller = discretization_error_bound(5e-4, 0.055, 0.05).unwrap();
        assert!((small / smaller - 4.0).abs() < 1e-3);
    }

    #[test]
    fn intervals_arithmetic() {
        let est = ParamEstimate { beta_hat: 0.16, gamma_hat: 1.0 / 30.0 };
        let iv = param_intervals(&est, 0.01);
        assert!((iv.beta_lo - 0.15).abs() < 1e-15 && (iv.beta_hi - 0.17).abs() < 1e-15);
        assert!((iv.gamma_lo - 0.023_333_3).abs() < 1e-7 && (iv.gamma_hi - 0.043_333_3).abs() < 1e-7);
        let point = param_intervals(&est, 0.0);
        assert_eq!((point.beta_lo, point.beta_hi), (0.16, 0.16));
        assert!(point.contains(&truth()));
    }

    #[test]
    fn exact_recovery_from_euler_data() {
        let p = truth();
        let a = SirState::new(80.0, 0.7659, 0.1786, 0.0555).unwrap();
        let b = SirState::new(90.0, 0.5001, 0.3555, 0.1444).unwrap();
        let batch = euler_batch(&p, a, b, (0.0, 0.02), 0.01);
        let est = estimate_params(&batch).unwrap();
        assert!(est.error_norm(&p) <= 1e-10, "{est:?}");
        assert!(!est.has_negative());
        let residual = est.as_row() * batch.h * batch.gram() - batch.l * batch.z.transpose();
        assert!(residual.norm() <= 1e-10 * (batch.l * batch.z.transpose()).norm());
    }

    #[test]
    fn zero_infection_is_singular() {
        let s = |t| MeasuredSample { t, s_hat: 0.9, i_hat: 0.0, u: 0.0 };
        let batch = build_regressor_batch(&s(1.0), &s(2.0), &s(5.0), &s(6.0), 1.0).unwrap();
        assert!(matches!(estimate_params(&batch), Err(EstimationError::SingularRegressors { .. })));
    }

    #[test]
    fn batch_rejects_bad_stamps() {
        let s = |t| MeasuredSample { t, s_hat: 0.9, i_hat: 0.1, u: 0.0 };
        assert!(matches!(
            build_regressor_batch(&s(1.0), &s(2.5), &s(5.0), &s(6.0), 1.0),
            Err(EstimationError::MismatchedTimes { .. })
        ));
        assert!(matches!(
            build_regressor_batch(&s(1.0), &s(2.0), &s(1.0), &s(2.0), 1.0),
            Err(EstimationError::DuplicateBaseTimes(_))
        ));
        assert!(build_regressor_batch(&s(1.0), &s(2.0), &s(5.0), &s(6.0), 0.0).is_err());
    }

    #[test]
    fn bound_terms_behave() {
        let base = BoundInputs {
            h: 0.5,
            zeta: 0.055,
            f_max: 0.02,
            v_max: 0.0,
            u_max_local: 0.0,
            x_max: 1.0,
            r: 0.1,
            c: 0.5,
            lambda_min: 1e-3,
        };
        let t = error_bound_b(&base).unwrap();
        assert_eq!(t.differencing + t.coupling, 0.0);
        assert!(t.total() > 0.0);
        assert!(error_bound_b(&BoundInputs { lambda_min: 0.0, ..base }).is_err());
        assert!(error_bound_b(&BoundInputs { h: 20.0, ..base }).is_err());
        assert!(error_bound_b(&BoundInputs { v_max: -1.0, ..base }).is_err());
        let noisy = error_bound_b(&BoundInputs { v_max: 1e-5, ..base }).unwrap();
        assert!(noisy.differencing > 0.0 && noisy.coupling > 0.0);
    }

    fn state_strategy() -> impl Strategy<Value = SirState> {
        (0.05f64..0.95, 0.01f64..0.5).prop_filter_map("mass", |(s, i)| {
            (s + i <= 1.0).then(|| SirState::new(0.0, s, i, 1.0 - s - i).ok()).flatten()
        })
    }

    proptest! {
        #[test]
        fn recovery_is_exact_on_euler_data(
            beta in 0.05f64..0.6,
            gamma in 0.01f64..0.3,
            a in state_strategy(),
            b in state_strategy(),
            h in 0.01f64..2.0,
            u in (0.0f64..0.2, 0.0f64..0.2),
        ) {
            let p = EpidemicParams::new(beta, gamma).unwrap();
            let b = SirState { t: 30.0, ..b };
            let batch = euler_batch(&p, a, b, u, h);
            let (lmin, lmax) = batch.gram_eigenvalues();
            prop_assume!(lmin > 1e-8 * lmax);
            // rounding in the differences of l is amplified by ‖Z⁺‖ / h
            let roundoff = 16.0 * f64::EPSILON * a.i.max(b.i) * batch.right_inverse_norm().unwrap() / h;
            prop_assume!(roundoff < 1e-11);
            let est = estimate_params(&batch).unwrap();
            prop_assert!(est.error_norm(&p) <= 1e-10);
        }

        #[test]
        fn decomposition_identity(
            a in state_strategy(),
            b in state_strategy(),
            h in 0.05f64..2.0,
            noise in prop::collection::vec(-1e-3f64..1e-3, 6),
            e in (-1e-4f64..1e-4, -1e-4f64..1e-4),
        ) {
            // Synthetic data: true next infection = Euler prediction + e,
            // measurements = truth + noise.
            let p = truth();
            let b = SirState { t: 40.0, ..b };
            let mut samples = Vec::new();
            let mut w = [0.0; 2];
            for (k, (st, ek)) in [(a, e.0), (b, e.1)].into_iter().enumerate() {
                let next_i = euler_step(&st, &p, 0.0, h).i + ek;
                let (vs, vi, vi_next) = (noise[3 * k], noise[3 * k + 1], noise[3 * k + 2]);
                w[k] = aggregated_measurement_error(&p, &st, (vs, vi), vi_next, 0.0, h);
                samples.push(MeasuredSample { t: st.t, s_hat: st.s + vs, i_hat: st.i + vi, u: 0.0 });
                samples.push(MeasuredSample { t: st.t + h, s_hat: 0.0, i_hat: next_i + vi_next, u: 0.0 });
            }
            let batch = build_regressor_batch(&samples[0], &samples[1], &samples[2], &samples[3], h).unwrap();
            let (lmin, lmax) = batch.gram_eigenvalues();
            prop_assume!(lmin > 1e-8 * lmax);
            let est = estimate_params(&batch).unwrap();
            let direct = est.as_row() - RowVector2::new(p.beta, p.gamma);
            let rebuilt = reconstruct_error(&batch, [e.0, e.1], w).unwrap();
            let scale = batch.right_inverse_norm().unwrap() / h;
            prop_assert!((direct - rebuilt).norm() <= 1e-10 * scale.max(1.0));
        }

        #[test]
        fn lambda_scale_identity(a in state_strategy(), b in state_strategy()) {
            let b = SirState { t: 10.0, ..b };
            let batch = euler_batch(&truth(), a, b, (0.0, 0.0), 0.1);
            let (lmin, lmax) = batch.gram_eigenvalues();
            prop_assume!(lmin > 1e-8 * lmax);
            let norm = batch.right_inverse_norm().unwrap();
            let expected = 1.0 / lmin.sqrt();
            prop_assert!((norm - expected).abs() <= 1e-6 * expected);
        }

        #[test]
        fn noise_free_bound_strictly_increasing_in_h(
            zeta in 0.01f64..1.0,
            f_max in 1e-4f64..1.0,
            lambda_min in 1e-6f64..1.0,
            frac in (0.01f64..0.98, 0.01f64..0.98),
        ) {
            let (lo, hi) = if frac.0 < frac.1 { frac } else { (frac.1, frac.0) };
            prop_assume!(hi - lo > 1e-6);
            let inputs = |h: f64| BoundInputs { h, zeta, f_max, v_max: 0.0, u_max_local: 0.0, x_max: 1.0, r: 0.1, c: 0.0, lambda_min };
            let b_lo = error_bound_b(&inputs(lo / zeta)).unwrap().total();
            let b_hi = error_bound_b(&inputs(hi / zeta)).unwrap().total();
            prop_assert!(b_hi > b_lo);
        }
    }
}
