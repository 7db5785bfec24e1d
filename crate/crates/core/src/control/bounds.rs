use serde::{Deserialize, Serialize};

use crate::estimation::MeasuredSample;
use crate::model::SirState;

/// Lower and upper bounds on the true susceptible and infected fractions at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub s_min: f64,
    pub s_max: f64,
    pub i_min: f64,
    pub i_max: f64,
}

impl Envelope {
    /// Widen measured values by known amplitudes and clip to `[0, 1]`.
    pub fn around(s_hat: f64, i_hat: f64, amp_s: f64, amp_i: f64) -> Self {
        Self {
            s_min: (s_hat - amp_s).max(0.0),
            s_max: (s_hat + amp_s).min(1.0),
            i_min: (i_hat - amp_i).max(0.0),
            i_max: (i_hat + amp_i).min(1.0),
        }
    }

    pub fn contains(&self, s: f64, i: f64) -> bool {
        (self.s_min..=self.s_max).contains(&s) && (self.i_min..=self.i_max).contains(&i)
    }
}

/// What a controller sees at one instant: measured fractions and the
/// amplitude bound on their errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub s_hat: f64,
    pub i_hat: f64,
    pub amp_s: f64,
    pub amp_i: f64,
}

impl Measurement {
    pub fn exact(state: &SirState) -> Self {
        Self { s_hat: state.s, i_hat: state.i, amp_s: 0.0, amp_i: 0.0 }
    }

    pub fn envelope(&self) -> Envelope {
        Envelope::around(self.s_hat, self.i_hat, self.amp_s, self.amp_i)
    }
}

/// Source of measurements for a closed-loop run.
///
/// Implementations must be deterministic in `(t, truth)` so that switching
/// times can be refined by repeated evaluation.
pub trait Sensor {
    fn measure(&self, t: f64, truth: &SirState) -> Measurement;
}

/// Noise-free sensor with zero error amplitude.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectSensor;

impl Sensor for PerfectSensor {
    fn measure(&self, _t: f64, truth: &SirState) -> Measurement {
        Measurement::exact(truth)
    }
}

/// Envelope series over time, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateBounds {
    pub times: Vec<f64>,
    pub envelopes: Vec<Envelope>,
}

impl StateBounds {
    pub fn push(&mut self, t: f64, envelope: Envelope) {
        self.times.push(t);
        self.envelopes.push(envelope);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn at(&self, t: f64) -> Option<Envelope> {
        let (&first, &last) = (self.times.first()?, self.times.last()?);
        if t < first || t > last {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t).saturating_sub(1);
        if k + 1 >= self.times.len() || self.times[k] == t {
            return Some(self.envelopes[k]);
        }
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let (a, b) = (&self.envelopes[k], &self.envelopes[k + 1]);
        let mix = |x: f64, y: f64| x + w * (y - x);
        Some(Envelope {
            s_min: mix(a.s_min, b.s_min),
            s_max: mix(a.s_max, b.s_max),
            i_min: mix(a.i_min, b.i_min),
            i_max: mix(a.i_max, b.i_max),
        })
    }

    /// Upper susceptible envelope as `(t, s_max)` pairs.
    pub fn s_max_series(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.envelopes.iter().map(|e| e.s_max))
    }
}

/// Envelopes around a measured series with constant amplitudes `(δ_S, δ_I)`.
pub fn construct_state_bounds(measured: &[MeasuredSample], noise_amp: (f64, f64)) -> StateBounds {
    let mut bounds = StateBounds::default();
    for m in measured {
        bounds.push(m.t, Envelope::around(m.s_hat, m.i_hat, noise_amp.0, noise_amp.1));
    }
    bounds
}
