//! SIR dynamics with an isolation-rate input.
//!
//! State fractions `(S, I, R)` evolve as
//!
//! ```text
//! dS/dt = -β S I
//! dI/dt =  β S I - (γ + u) I
//! dR/dt =  (γ + u) I
//! ```
//!
//! where `u` is the isolation rate applied to the infected compartment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|S + I + R - 1|` for a state to count as valid.
pub const CONSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid epidemic parameters: beta={beta}, gamma={gamma} (both must be positive and finite)")]
    InvalidParams { beta: f64, gamma: f64 },
    #[error("invalid state at t={t}: S={s}, I={i}, R={r}")]
    InvalidState { t: f64, s: f64, i: f64, r: f64 },
    #[error("invalid control bound u_max={0} (must lie in (0, 1])")]
    InvalidControlBound(f64),
    #[error("susceptible fraction must be positive for the peak formula, got {0}")]
    NonPositiveSusceptible(f64),
}

/// Transmission rate `beta` and removal rate `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpidemicParams {
    pub beta: f64,
    pub gamma: f64,
}

impl EpidemicParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, ModelError> {
        let p = Self { beta, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.beta) && ok(self.gamma) {
            Ok(())
        } else {
            Err(ModelError::InvalidParams { beta: self.beta, gamma: self.gamma })
        }
    }

    /// Susceptible level `gamma / beta` at which infections stop growing with `u = 0`.
    pub fn herd_immunity_level(&self) -> f64 {
        self.gamma / self.beta
    }
}

/// Compartment fractions at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirState {
    pub t: f64,
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn new(t: f64, s: f64, i: f64, r: f64) -> Result<Self, ModelError> {
        let state = Self { t, s, i, r };
        if state.is_valid() {
            Ok(state)
        } else {
            Err(ModelError::InvalidState { t, s, i, r })
        }
    }

    /// Initial condition with `R = 0` and `S = 1 - I`.
    pub fn seeded(t: f64, i: f64) -> Result<Self, ModelError> {
        Self::new(t, 1.0 - i, i, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        self.t.is_finite()
            && unit(self.s)
            && unit(self.i)
            && unit(self.r)
            && self.conservation_error() <= CONSERVATION_TOL
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.s.is_finite() && self.i.is_finite() && self.r.is_finite()
    }

    pub fn conservation_error(&self) -> f64 {
        (self.s + self.i + self.r - 1.0).abs()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.s, self.i, self.r]
    }

    pub fn from_array(t: f64, x: [f64; 3]) -> Self {
        Self { t, s: x[0], i: x[1], r: x[2] }
    }

    /// Euclidean norm of `(S, I, R)`.
    pub fn norm(&self) -> f64 {
        (self.s * self.s + self.i * self.i + self.r * self.r).sqrt()
    }
}

/// Upper limit on the isolation rate; the lower limit is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub u_max: f64,
}

impl ControlBounds {
    pub fn new(u_max: f64) -> Result<Self, ModelError> {
        if u_max.is_finite() && u_max > 0.0 && u_max <= 1.0 {
            Ok(Self { u_max })
        } else {
            Err(ModelError::InvalidControlBound(u_max))
        }
    }

    /// Clamp a raw rate into `[0, u_max]`, reporting whether clamping was needed.
    pub fn clamp(&self, raw: f64) -> (f64, bool) {
        if raw > self.u_max {
            (self.u_max, true)
        } else if raw < 0.0 {
            (0.0, true)
        } else {
            (raw, false)
        }
    }
}

/// Time derivatives of the three compartments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub ds: f64,
    pub di: f64,
    pub dr: f64,
}

impl Rates {
    pub fn as_array(&self) -> [f64; 3] {
        [self.ds, self.di, self.dr]
    }

    pub fn norm(&self) -> f64 {
        (self.ds * self.ds + self.di * self.di + self.dr * self.dr).sqrt()
    }
}

pub fn rhs(state: &SirState, params: &EpidemicParams, u: f64) -> Rates {
    rhs_array(state.as_array(), params, u).into()
}

pub(crate) fn rhs_array(x: [f64; 3], params: &EpidemicParams, u: f64) -> [f64; 3] {
    let infection = params.beta * x[0] * x[1];
    let removal = (params.gamma + u) * x[1];
    [-infection, infection - removal, removal]
}

impl From<[f64; 3]> for Rates {
    fn from(d: [f64; 3]) -> Self {
        Self { ds: d[0], di: d[1], dr: d[2] }
    }
}

/// One forward-Euler step of length `h` with the rate `u` held constant.
pub fn euler_step(state: &SirState, params: &EpidemicParams, u: f64, h: f64) -> SirState {
    let d = rhs_array(state.as_array(), params, u);
    SirState {
        t: state.t + h,
        s: state.s + h * d[0],
        i: state.i + h * d[1],
        r: state.r + h * d[2],
    }
}

/// Peak infection reached from `start` under the constant rate `u_fix`.
///
/// Uses the first integral of the SIR system,
/// `I_peak = ρ (ln ρ - 1 - ln S_a) + S_a + I_a` with `ρ = (γ + u_fix) / β`.
/// When `β S_a <= γ + u_fix` infections are already non-increasing and the
/// peak is the starting value `I_a`.
pub fn peak_infection(params: &EpidemicParams, start: &SirState, u_fix: f64) -> Result<f64, ModelError> {
    if start.s <= 0.0 || !start.s.is_finite() {
        return Err(ModelError::NonPositiveSusceptible(start.s));
    }
    let rho = (params.gamma + u_fix) / params.beta;
    if start.s <= rho {
        return Ok(start.i);
    }
    Ok(rho * (rho.ln() - 1.0 - start.s.ln()) + start.s + start.i)
}
