//! Truncated Gaussian measurement noise.
//!
//! A realisation is a pair of standard-normal sequences on the integration
//! grid, each value redrawn until it lies within three standard deviations.
//! Between grid nodes the sequences are interpolated linearly, so a
//! measurement is a continuous, deterministic function of time and true state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::control::{Measurement, Sensor};
use crate::estimation::MeasuredSample;
use crate::harness::config::NoiseConfig;
use crate::integrate::Trajectory;
use crate::model::SirState;

/// Truncation point of the noise, in standard deviations.
pub const TRUNCATION: f64 = 3.0;

/// Measured values are kept inside this range.
pub const MEASUREMENT_RANGE: (f64, f64) = (-0.1, 1.1);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Zero,
    Constant { sigma_s: f64, sigma_i: f64 },
    Proportional { divisor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    t0: f64,
    step: f64,
    xi_s: Vec<f64>,
    xi_i: Vec<f64>,
    scale: Scale,
}

fn truncated_normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let x: f64 = StandardNormal.sample(rng);
            if x.abs() <= TRUNCATION {
                break x;
            }
        })
        .collect()
}

/// Time-averaged squares of the susceptible and infected series.
pub fn signal_power(traj: &Trajectory) -> (f64, f64) {
    let span = match (traj.start_time(), traj.end_time()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => return traj.final_state().map_or((0.0, 0.0), |x| (x.s * x.s, x.i * x.i)),
    };
    let (mut ps, mut pi) = (0.0, 0.0);
    for w in traj.samples.windows(2) {
        let (a, b) = (&w[0].state, &w[1].state);
        let dt = b.t - a.t;
        ps += 0.5 * dt * (a.s * a.s + b.s * b.s);
        pi += 0.5 * dt * (a.i * a.i + b.i * b.i);
    }
    (ps / span, pi / span)
}

impl NoiseRealization {
    /// Draw a realisation covering `nodes` grid points from `t0` with spacing
    /// `step`. `power` is the per-series signal power used in SNR mode.
    pub fn generate(config: &NoiseConfig, t0: f64, step: f64, nodes: usize, power: (f64, f64), seed: u64) -> Self {
        let scale = match *config {
            NoiseConfig::None => Scale::Zero,
            NoiseConfig::SnrDb { db } => {
                let ratio = 10f64.powf(db / 10.0);
                Scale::Constant { sigma_s: (power.0 / ratio).sqrt(), sigma_i: (power.1 / ratio).sqrt() }
            }
            NoiseConfig::ScaledVariance { divisor } => Scale::Proportional { divisor },
        };
        let (xi_s, xi_i) = if scale == Scale::Zero {
            (Vec::new(), Vec::new())
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xi_s = truncated_normals(&mut rng, nodes.max(1));
            let xi_i = truncated_normals(&mut rng, nodes.max(1));
            (xi_s, xi_i)
        };
        Self { t0, step, xi_s, xi_i, scale }
    }

    pub fn noiseless() -> Self {
        Self { t0: 0.0, step: 1.0, xi_s: Vec::new(), xi_i: Vec::new(), scale: Scale::Zero }
    }

    /// Standard deviations `(σ_S, σ_I)` for the given true state.
    pub fn sigma(&self, truth: &SirState) -> (f64, f64) {
        match self.scale {
            Scale::Zero => (0.0, 0.0),
            Scale::Constant { sigma_s, sigma_i } => (sigma_s, sigma_i),
            Scale::Proportional { divisor } => ((truth.s.max(0.0) / divisor).sqrt(), (truth.i.max(0.0) / divisor).sqrt()),
        }
    }

    /// Standard-normal draws at time `t`, linearly interpolated between nodes
    /// and held constant beyond the last node.
    pub fn standard_at(&self, t: f64) -> (f64, f64) {
        let n = self.xi_s.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        let pos = ((t - self.t0) / self.step).max(0.0);
        let k = pos.floor() as usize;
        if k + 1 >= n {
            return (self.xi_s[n - 1], self.xi_i[n - 1]);
        }
        let w = pos - k as f64;
        if w <= 1e-9 {
            return (self.xi_s[k], self.xi_i[k]);
        }
        if w >= 1.0 - 1e-9 {
            return (self.xi_s[k + 1], self.xi_i[k + 1]);
        }
        let lerp = |v: &[f64]| v[k] + w * (v[k + 1] - v[k]);
        (lerp(&self.xi_s), lerp(&self.xi_i))
    }
}

impl Sensor for NoiseRealization {
    fn measure(&self, t: f64, truth: &SirState) -> Measurement {
        let (sigma_s, sigma_i) = self.sigma(truth);
        let (xs, xi) = self.standard_at(t);
        let clip = |x: f64| x.clamp(MEASUREMENT_RANGE.0, MEASUREMENT_RANGE.1);
        Measurement {
            s_hat: clip(truth.s + sigma_s * xs),
            i_hat: clip(truth.i + sigma_i * xi),
            amp_s: TRUNCATION * sigma_s,
            amp_i: TRUNCATION * sigma_i,
        }
    }
}

/// Measured series for an existing trajectory; SNR power is taken from the
/// trajectory itself.
pub fn inject_noise(traj: &Trajectory, config: &NoiseConfig, seed: u64) -> (Vec<MeasuredSample>, NoiseRealization) {
    let t0 = traj.start_time().unwrap_or(0.0);
    let sensor = NoiseRealization::generate(config, t0, traj.step, traj.len(), signal_power(traj), seed);
    let measured = traj
        .samples
        .iter()
        .map(|s| {
            let m = sensor.measure(s.state.t, &s.state);
            MeasuredSample { t: s.state.t, s_hat: m.s_hat, i_hat: m.i_hat, u: s.u }
        })
        .collect();
    (measured, sensor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate_constant, IntegratorConfig, Method};
    use crate::model::EpidemicParams;

    fn wave() -> Trajectory {
        let p = EpidemicParams::new(0.16, 1.0 / 30.0).unwrap();
        let x0 = SirState::seeded(0.0, 1e-5).unwrap();
        integrate_constant(&p, 0.0, &x0, &IntegratorConfig::new(Method::Rk4, 0.01, 110.0).unwrap()).unwrap()
    }

    #[test]
    fn no_noise_means_exact_measurements() {
        let traj = wave();
        let (m, _) = inject_noise(&traj, &NoiseConfig::None, 3);
        for (a, b) in m.iter().zip(traj.states()) {
            assert_eq!((a.s_hat, a.i_hat), (b.s, b.i));
        }
    }

    #[test]
    fn snr_sets_noise_power() {
        let traj = wave();
        let (measured, sensor) = inject_noise(&traj, &NoiseConfig::SnrDb { db: 40.0 }, 11);
        let (ps, _) = signal_power(&traj);
        let noise_power: f64 = measured
            .iter()
            .zip(traj.states())
            .map(|(m, x)| (m.s_hat - x.s).powi(2))
            .sum::<f64>()
            / measured.len() as f64;
        let realised_db = 10.0 * (ps / noise_power).log10();
        // truncation at 3σ removes ~3% of the variance
        assert!((realised_db - 40.0).abs() < 0.3, "{realised_db}");
        let (sigma_s, _) = sensor.sigma(traj.final_state().unwrap());
        assert!((sigma_s - (ps / 1e4).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn noise_is_truncated_and_reproducible() {
        let traj = wave();
        let cfg = NoiseConfig::ScaledVariance { divisor: 100.0 };
        let (a, sensor) = inject_noise(&traj, &cfg, 5);
        let (b, _) = inject_noise(&traj, &cfg, 5);
        let (c, _) = inject_noise(&traj, &cfg, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (m, s) in a.iter().zip(traj.samples.iter()) {
            let amp = sensor.measure(s.state.t, &s.state);
            assert!((m.s_hat - s.state.s).abs() <= amp.amp_s + 1e-15);
            assert!((m.i_hat - s.state.i).abs() <= amp.amp_i + 1e-15);
            assert!(amp.envelope().contains(s.state.s, s.state.i));
        }
    }

    #[test]
    fn interpolation_is_continuous() {
        let sensor = NoiseRealization::generate(&NoiseConfig::SnrDb { db: 30.0 }, 0.0, 0.5, 10, (1.0, 1.0), 1);
        let (a, _) = sensor.standard_at(1.0);
        let (b, _) = sensor.standard_at(1.0 + 1e-12);
        assert!((a - b).abs() < 1e-9);
        let (mid, _) = sensor.standard_at(1.25);
        let (right, _) = sensor.standard_at(1.5);
        assert!((mid - 0.5 * (a + right)).abs() < 1e-12);
        assert_eq!(sensor.standard_at(100.0), sensor.standard_at(4.5));
    }
}
