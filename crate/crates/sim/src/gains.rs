//! Log-distance path loss with optional Rayleigh fading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Stream id keeping gain draws apart from everything else seeded by `seed`.
const GAIN_STREAM: u64 = 0x6a1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainModel {
    /// Gain at the reference distance, dB.
    pub reference_gain_db: f64,
    pub reference_distance_m: f64,
    pub path_loss_exponent: f64,
    /// Multiply by an exponential power fade per (link, channel).
    pub rayleigh: bool,
}

impl Default for GainModel {
    fn default() -> Self {
        Self {
            reference_gain_db: -30.0,
            reference_distance_m: 1.0,
            path_loss_exponent: 3.0,
            rayleigh: true,
        }
    }
}

impl GainModel {
    pub fn check(&self) -> Vec<(&'static str, &'static str)> {
        let mut out = Vec::new();
        if !self.reference_gain_db.is_finite() {
            out.push(("reference_gain_db", "must be finite"));
        }
        if !(self.reference_distance_m.is_finite() && self.reference_distance_m > 0.0) {
            out.push(("reference_distance_m", "must be positive"));
        }
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent >= 0.0) {
            out.push(("path_loss_exponent", "must be non-negative"));
        }
        out
    }

    /// Mean gain at distance `d`.
    pub fn mean_gain(&self, d: f64) -> f64 {
        10f64.powf(self.reference_gain_db / 10.0) * (d / self.reference_distance_m).powf(-self.path_loss_exponent)
    }

    pub fn sampler(&self, seed: u64) -> GainSampler {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(GAIN_STREAM);
        GainSampler { model: *self, rng }
    }
}

/// Draws gains in link order; the sequence depends only on the seed.
pub struct GainSampler {
    model: GainModel,
    rng: ChaCha8Rng,
}

impl GainSampler {
    pub fn draw(&mut self, distance: f64, channels: usize) -> Vec<f64> {
        let mean = self.model.mean_gain(distance);
        (0..channels)
            .map(|_| {
                let fade: f64 = Exp1.sample(&mut self.rng);
                if self.model.rayleigh {
                    mean * fade
                } else {
                    mean
                }
            })
            .collect()
    }
}
