//! Coordinator-side parameter averaging.
//!
//! Every `period` slots the coordinator averages the pricing networks of all
//! participating links. Each link then moves toward the average by a blend
//! factor that grows with the loss it accumulated since the last round, so
//! links that are still far from settled are corrected more strongly. The
//! latest average is also the warm start handed to links that join later.

use alloc::vec::Vec;

use crate::price_net::{MlpParams, PARAM_COUNT};
use crate::{Error, Result};

/// What a link adds to its accumulated loss per channel sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossAccumulation {
    /// The squared training loss `(q1 + q2)^2`.
    #[default]
    Squared,
    /// The target offset magnitude `|q1 + q2|`.
    AbsoluteOffset,
}

impl LossAccumulation {
    pub fn sample(self, target_offset: f64) -> f64 {
        match self {
            Self::Squared => target_offset * target_offset,
            Self::AbsoluteOffset => target_offset.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederatedConfig {
    pub enabled: bool,
    /// Round period in slots.
    pub period: u64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Training slots a link must have completed before it contributes.
    pub min_training_slots: u64,
    pub accumulation: LossAccumulation,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            period: 100,
            gamma: 1.2,
            epsilon: 0.4,
            min_training_slots: 1,
            accumulation: LossAccumulation::Squared,
        }
    }
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::Domain("federated period must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Domain("federated epsilon must be positive"));
        }
        Ok(())
    }

    /// Whether slot number `slot` (1-based clock) closes a round.
    pub fn is_round(&self, slot: u64) -> bool {
        self.enabled && slot > 0 && slot.is_multiple_of(self.period)
    }
}

/// Elementwise mean of the parameter vectors.
///
/// Values are sorted per coordinate before summation, so the result does not
/// depend on the order of `all`, and it is accumulated as offsets from the
/// smallest value, so identical inputs average to themselves exactly.
pub fn average_params(all: &[&MlpParams]) -> Result<MlpParams> {
    if all.is_empty() {
        return Err(Error::EmptyAverage);
    }
    let n = all.len() as f64;
    let mut column: Vec<f64> = Vec::with_capacity(all.len());
    let mut out = Vec::with_capacity(PARAM_COUNT);
    for k in 0..PARAM_COUNT {
        column.clear();
        column.extend(all.iter().map(|p| p.as_slice()[k]));
        column.sort_by(f64::total_cmp);
        let lo = column[0];
        let spread: f64 = column.iter().map(|v| v - lo).sum();
        out.push(lo + spread / n);
    }
    MlpParams::from_flat(out)
}

/// Blend factor `1 / (1 + exp(-(gamma / epsilon * q_sum - gamma)))`.
pub fn blend_factor(q_sum: f64, gamma: f64, epsilon: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-(gamma / epsilon * q_sum - gamma)))
}

/// `beta * snapshot + (1 - beta) * own`, elementwise.
pub fn apply_blend(own: &MlpParams, snapshot: &MlpParams, beta: f64) -> MlpParams {
    if beta <= 0.0 {
        return own.clone();
    }
    if beta >= 1.0 {
        return snapshot.clone();
    }
    let flat = own
        .as_slice()
        .iter()
        .zip(snapshot.as_slice())
        .map(|(&o, &s)| (o + beta * (s - o)).clamp(o.min(s), o.max(s)))
        .collect();
    MlpParams::from_flat(flat).expect("same topology")
}

/// Parameters handed to a joining link.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub params: MlpParams,
    /// False when no round has completed yet and the fallback was used.
    pub from_snapshot: bool,
}

/// Coordinator state: config plus the latest published snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinator {
    pub config: FederatedConfig,
    snapshot: Option<MlpParams>,
    rounds: u64,
}

impl Coordinator {
    pub fn new(config: FederatedConfig) -> Self {
        Self {
            config,
            snapshot: None,
            rounds: 0,
        }
    }

    pub fn snapshot(&self) -> Option<&MlpParams> {
        self.snapshot.as_ref()
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Averages the contributions and publishes the result as the snapshot.
    pub fn aggregate(&mut self, contributions: &[&MlpParams]) -> Result<&MlpParams> {
        let avg = average_params(contributions)?;
        self.rounds += 1;
        Ok(self.snapshot.insert(avg))
    }

    /// Blend factor for a link with accumulated loss `q_sum`.
    pub fn beta(&self, q_sum: f64) -> f64 {
        blend_factor(q_sum, self.config.gamma, self.config.epsilon)
    }

    /// Copy of the latest snapshot, or `fallback()` when there is none yet.
    pub fn warm_start(&self, fallback: impl FnOnce() -> MlpParams) -> WarmStart {
        match &self.snapshot {
            Some(s) => WarmStart {
                params: s.clone(),
                from_snapshot: true,
            },
            None => WarmStart {
                params: fallback(),
                from_snapshot: false,
            },
        }
    }
}
