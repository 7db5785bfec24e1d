use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ClosedLoopConfig, ClosedLoopError};
use crate::integrate::IntegratorConfig;
use crate::model::{ControlBounds, EpidemicParams, ModelError, SirState};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid model input")]
    Model(#[from] ModelError),
    #[error("invalid closed-loop settings")]
    ClosedLoop(#[from] ClosedLoopError),
    #[error("invalid noise setting: {0}")]
    Noise(String),
    #[error("invalid estimation setting: {0}")]
    Estimation(String),
    #[error("invalid bound factors: {0}")]
    Factors(String),
    #[error("could not parse scenario JSON")]
    Parse(#[from] serde_json::Error),
}

/// Measurement noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseConfig {
    #[default]
    None,
    /// Constant-variance Gaussian noise at the given signal-to-noise ratio.
    SnrDb { db: f64 },
    /// Noise variance `x(t) / divisor` for each series.
    ScaledVariance { divisor: f64 },
}

/// Where the robust controller gets its worst-case parameters from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobustBounds {
    /// `beta_max = beta * beta_factor`, `gamma_min = gamma * gamma_factor`.
    Inflation { beta_factor: f64, gamma_factor: f64 },
    /// Interval ends from the estimation sweep, at the sample step with the
    /// smallest bound.
    Estimated,
}

impl Default for RobustBounds {
    fn default() -> Self {
        RobustBounds::Inflation { beta_factor: 1.05, gamma_factor: 0.95 }
    }
}

/// Multipliers for the point estimates fed to the misestimated controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misestimate {
    pub beta_factor: f64,
    pub gamma_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// First base time.
    pub t_i: f64,
    /// Second base time.
    pub t_j: f64,
    /// Finest sample step; the sweep uses `alpha * h_unit`.
    pub h_unit: f64,
    pub alphas: Vec<usize>,
    /// Fixed Lipschitz constant; computed from the model when absent.
    #[serde(default)]
    pub zeta: Option<f64>,
    /// Radius of the Lipschitz ball.
    pub r: f64,
    /// End of the open-loop run the samples are drawn from.
    pub horizon: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self { t_i: 80.0, t_j: 90.0, h_unit: 0.01, alphas: vec![1, 10, 50, 100, 200], zeta: Some(0.055), r: 0.1, horizon: 110.0 }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Estimation(m.to_string()));
        if self.alphas.is_empty() || self.alphas.contains(&0) {
            return bad("alphas must be non-empty positive integers");
        }
        if !(self.h_unit > 0.0 && self.h_unit.is_finite()) {
            return bad("h_unit must be positive");
        }
        if !(self.t_i >= 0.0 && self.t_j >= 0.0) || self.t_i == self.t_j {
            return bad("base times must be distinct and non-negative");
        }
        if self.zeta.is_some_and(|z| !(z > 0.0 && z.is_finite())) || !(self.r >= 0.0) {
            return bad("zeta must be positive and r non-negative");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        Ok(())
    }

    /// Horizon long enough to contain every sample of the sweep.
    pub fn required_horizon(&self) -> f64 {
        let longest = self.alphas.iter().copied().max().unwrap_or(1) as f64 * self.h_unit;
        self.horizon.max(self.t_i.max(self.t_j) + longest + self.h_unit)
    }
}

fn default_interval() -> usize {
    1
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub params: EpidemicParams,
    pub init: SirState,
    pub i_bar: f64,
    pub u_max: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub robust: RobustBounds,
    #[serde(default)]
    pub misestimate: Option<Misestimate>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default = "default_interval")]
    pub measurement_interval: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        SirState::new(self.init.t, self.init.s, self.init.i, self.init.r)?;
        self.closed_loop()?.validate()?;
        match self.noise {
            NoiseConfig::None => {}
            NoiseConfig::SnrDb { db } if db.is_finite() => {}
            NoiseConfig::ScaledVariance { divisor } if divisor > 0.0 && divisor.is_finite() => {}
            other => return Err(ConfigError::Noise(format!("{other:?}"))),
        }
        let positive = |a: f64, b: f64| a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite();
        if let RobustBounds::Inflation { beta_factor, gamma_factor } = self.robust {
            if !positive(beta_factor, gamma_factor) {
                return Err(ConfigError::Factors(format!("robust {beta_factor}, {gamma_factor}")));
            }
        }
        if let Some(m) = self.misestimate {
            if !positive(m.beta_factor, m.gamma_factor) {
                return Err(ConfigError::Factors(format!("misestimate {}, {}", m.beta_factor, m.gamma_factor)));
            }
        }
        self.estimation.validate()
    }

    pub fn closed_loop(&self) -> Result<ClosedLoopConfig, ConfigError> {
        Ok(ClosedLoopConfig {
            i_bar: self.i_bar,
            bounds: ControlBounds::new(self.u_max)?,
            integrator: self.integrator,
            measurement_interval: self.measurement_interval,
        })
    }
}

/// Mix a base seed with a scenario id into an independent stream seed.
pub fn scenario_seed(base: u64, id: u64) -> u64 {
    let mut z = base ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets::Preset;

    #[test]
    fn presets_validate_and_round_trip() {
        for preset in Preset::ALL {
            let cfg = preset.config();
            cfg.validate().unwrap();
            let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let text = r#"{
            "name": "mini",
            "params": {"beta": 0.16, "gamma": 0.05},
            "init": {"t": 0.0, "s": 0.999, "i": 0.001, "r": 0.0},
            "i_bar": 0.01,
            "u_max": 0.2
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(cfg.noise, NoiseConfig::None);
        assert_eq!(cfg.measurement_interval, 1);
        assert_eq!(cfg.integrator.step, 0.01);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = Preset::PolicyCompare.config();
        cfg.u_max = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = Preset::PolicyCompare.config();
        cfg.noise = NoiseConfig::ScaledVariance { divisor: 0.0 };
        assert!(cfg.validate().is_err());
        let mut cfg = Preset::PolicyCompare.config();
        cfg.estimation.alphas.clear();
        assert!(cfg.validate().is_err());
        assert!(matches!(ScenarioConfig::from_json("{"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn seeds_differ_by_scenario() {
        let a = scenario_seed(7, 0);
        assert_ne!(a, scenario_seed(7, 1));
        assert_ne!(a, scenario_seed(8, 0));
        assert_eq!(a, scenario_seed(7, 0));
    }
}
