use std::fmt;
use std::str::FromStr;

use crate::harness::config::{EstimationConfig, Misestimate, NoiseConfig, RobustBounds, ScenarioConfig};
use crate::integrate::IntegratorConfig;
use crate::model::{EpidemicParams, SirState};

/// Named experiment setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Robust against optimal policy, β = 0.16, γ = 0.063, state-scaled noise.
    Fig1,
    /// Uncontrolled wave, β = 0.16, γ = 1/30, up to t = 110.
    SirWave,
    /// Noise-free estimation sweep over α = 1..=200.
    ParamEst,
    /// Estimation sweep over α = 1..=200 at 100 dB.
    BoundSweep,
    /// Optimal, robust and misestimated policies at 55 dB.
    PolicyCompare,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Fig1, Preset::SirWave, Preset::ParamEst, Preset::BoundSweep, Preset::PolicyCompare];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::SirWave => "sir-wave",
            Preset::ParamEst => "param-est",
            Preset::BoundSweep => "bound-sweep",
            Preset::PolicyCompare => "policy-compare",
        }
    }

    pub fn config(self) -> ScenarioConfig {
        let wave_params = EpidemicParams { beta: 0.16, gamma: 1.0 / 30.0 };
        let init = SirState { t: 0.0, s: 1.0 - 1e-5, i: 1e-5, r: 0.0 };
        let full_sweep = EstimationConfig { alphas: (1..=200).collect(), ..EstimationConfig::default() };
        let base = ScenarioConfig {
            name: self.name().to_string(),
            params: wave_params,
            init,
            i_bar: 0.01,
            u_max: 0.15,
            noise: NoiseConfig::None,
            robust: RobustBounds::default(),
            misestimate: None,
            integrator: IntegratorConfig::default(),
            measurement_interval: 1,
            seed: 2024,
            estimation: EstimationConfig::default(),
        };
        match self {
            Preset::Fig1 => ScenarioConfig {
                params: EpidemicParams { beta: 0.16, gamma: 0.063 },
                u_max: 0.2,
                noise: NoiseConfig::ScaledVariance { divisor: 100.0 },
                ..base
            },
            Preset::SirWave => ScenarioConfig {
                integrator: IntegratorConfig { horizon: 110.0, ..IntegratorConfig::default() },
                ..base
            },
            Preset::ParamEst => ScenarioConfig { estimation: full_sweep, ..base },
            Preset::BoundSweep => ScenarioConfig { noise: NoiseConfig::SnrDb { db: 100.0 }, estimation: full_sweep, ..base },
            Preset::PolicyCompare => ScenarioConfig {
                noise: NoiseConfig::SnrDb { db: 55.0 },
                misestimate: Some(Misestimate { beta_factor: 0.95, gamma_factor: 1.05 }),
                ..base
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset {s:?}; expected one of fig1, sir-wave, param-est, bound-sweep, policy-compare"))
    }
}
