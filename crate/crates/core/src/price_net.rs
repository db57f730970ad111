//! Per-link pricing network.
//!
//! A 3 -> 32 -> 32 -> 1 fully connected net maps (D2D traffic load, WiFi load,
//! channel gain) to a channel price in `(0, w)`. Hidden units use `tanh`; the
//! output is `w * sigmoid(z)`. Training is online and unsupervised: the target
//! of each sample is the current prediction shifted by a fairness term and a
//! collision term, and the shift is treated as a constant during
//! differentiation.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub const INPUTS: usize = 3;
pub const HIDDEN_1: usize = 32;
pub const HIDDEN_2: usize = 32;

// Flat layout: W1 (row-major, out x in), b1, W2, b2, W3, b3.
const W1: usize = 0;
const B1: usize = W1 + HIDDEN_1 * INPUTS;
const W2: usize = B1 + HIDDEN_1;
const B2: usize = W2 + HIDDEN_2 * HIDDEN_1;
const W3: usize = B2 + HIDDEN_2;
const B3: usize = W3 + HIDDEN_2;

/// Number of scalars in [`MlpParams`].
pub const PARAM_COUNT: usize = B3 + 1;

/// Table defaults for the learning block.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_PRICE_CAP: f64 = 10.0;
pub const DEFAULT_FAIRNESS_STEP: f64 = 0.01;
pub const DEFAULT_COLLISION_PENALTY: f64 = 0.03;
pub const DEFAULT_NO_COLLISION_REWARD: f64 = -0.03;

/// Relative band around the median ETT treated as "at the median".
pub const MEDIAN_BAND: f64 = 1e-9;

/// Weights and biases of the pricing network, stored flat so that the
/// coordinator can average them directly.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    flat: Vec<f64>,
}

impl MlpParams {
    pub fn zeros() -> Self {
        Self {
            flat: vec![0.0; PARAM_COUNT],
        }
    }

    pub fn from_flat(flat: Vec<f64>) -> Result<Self> {
        if flat.len() != PARAM_COUNT {
            return Err(Error::ParamCount {
                got: flat.len(),
                expected: PARAM_COUNT,
            });
        }
        Ok(Self { flat })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    /// Uniform in `[-r, r]` with `r = 1/sqrt(fan_in)` per layer.
    pub fn random(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut flat = vec![0.0; PARAM_COUNT];
        let layers = [(W1, W2, INPUTS), (W2, W3, HIDDEN_1), (W3, PARAM_COUNT, HIDDEN_2)];
        for (start, end, fan_in) in layers {
            let r = 1.0 / libm::sqrt(fan_in as f64);
            for v in &mut flat[start..end] {
                *v = rng.random_range(-r..=r);
            }
        }
        Self { flat }
    }

    pub fn is_finite(&self) -> bool {
        self.flat.iter().all(|v| v.is_finite())
    }
}

/// Where a link's initial parameters come from.
#[derive(Debug, Clone, Copy)]
pub enum InitSource<'a> {
    /// Random init from `(seed, stream)`; the stream separates links.
    Random { seed: u64, stream: u64 },
    /// Copy of a coordinator snapshot.
    Snapshot(&'a MlpParams),
}

pub fn init_params(source: InitSource<'_>) -> MlpParams {
    match source {
        InitSource::Random { seed, stream } => MlpParams::random(seed, stream),
        InitSource::Snapshot(s) => s.clone(),
    }
}

/// Reference scales used to bring raw features to roughly `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationSpec {
    /// Largest D2D traffic load in the scenario (bits).
    pub max_traffic_load: f64,
    pub gain_min: f64,
    pub gain_max: f64,
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_traffic_load.is_finite() && self.max_traffic_load > 0.0) {
            return Err(Error::ZeroScale("traffic load"));
        }
        if !(self.gain_min > 0.0 && self.gain_max.is_finite() && self.gain_max > self.gain_min) {
            return Err(Error::ZeroScale("channel gain"));
        }
        Ok(())
    }
}

/// Network input for one (link, channel) pair. The gain is mapped by a log
/// min-max over the scenario's gain range.
pub fn normalize_input(traffic_load: f64, wifi_load: f64, gain: f64, norms: &NormalizationSpec) -> Result<[f64; 3]> {
    norms.validate()?;
    if !(gain > 0.0) {
        return Err(Error::Domain("gain must be positive to normalise"));
    }
    let lo = libm::log(norms.gain_min);
    let hi = libm::log(norms.gain_max);
    Ok([
        traffic_load / norms.max_traffic_load,
        wifi_load,
        (libm::log(gain) - lo) / (hi - lo),
    ])
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

/// Activations of one forward pass, kept for backprop.
struct Trace {
    h1: [f64; HIDDEN_1],
    h2: [f64; HIDDEN_2],
    sig: f64,
    out: f64,
}

fn forward_trace(p: &[f64], x: &[f64; INPUTS], w_cap: f64) -> Trace {
    let mut h1 = [0.0; HIDDEN_1];
    for (k, h) in h1.iter_mut().enumerate() {
        let row = &p[W1 + k * INPUTS..W1 + (k + 1) * INPUTS];
        let z = p[B1 + k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        *h = libm::tanh(z);
    }
    let mut h2 = [0.0; HIDDEN_2];
    for (k, h) in h2.iter_mut().enumerate() {
        let row = &p[W2 + k * HIDDEN_1..W2 + (k + 1) * HIDDEN_1];
        let z = p[B2 + k] + row.iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>();
        *h = libm::tanh(z);
    }
    let z3 = p[B3] + p[W3..W3 + HIDDEN_2].iter().zip(&h2).map(|(w, v)| w * v).sum::<f64>();
    let sig = sigmoid(z3);
    Trace {
        h1,
        h2,
        sig,
        out: w_cap * sig,
    }
}

/// Price for one normalised input, in `(0, w_cap)`.
pub fn forward(params: &MlpParams, input: &[f64; INPUTS], w_cap: f64) -> Result<f64> {
    if input.iter().any(|v| !v.is_finite()) || !w_cap.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(forward_trace(&params.flat, input, w_cap).out)
}

/// One supervised sample: input and the (constant) regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub input: [f64; INPUTS],
    pub target: f64,
}

impl TrainingSample {
    /// Target = prediction shifted by the loss signal's offset.
    pub fn from_offset(input: [f64; INPUTS], predicted_price: f64, target_offset: f64) -> Self {
        Self {
            input,
            target: predicted_price + target_offset,
        }
    }
}

/// Mean squared error over the batch and its gradient with respect to every
/// parameter (targets are constants).
pub fn loss_and_gradient(params: &MlpParams, batch: &[TrainingSample], w_cap: f64) -> (f64, Vec<f64>) {
    let p = &params.flat;
    let mut grad = vec![0.0; PARAM_COUNT];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for sample in batch {
        let t = forward_trace(p, &sample.input, w_cap);
        let err = t.out - sample.target;
        loss += err * err * scale;
        // d loss / d z3 through w * sigmoid.
        let d_z3 = 2.0 * err * scale * w_cap * t.sig * (1.0 - t.sig);
        grad[B3] += d_z3;
        let mut d_z2 = [0.0; HIDDEN_2];
        for k in 0..HIDDEN_2 {
            grad[W3 + k] += d_z3 * t.h2[k];
            d_z2[k] = d_z3 * p[W3 + k] * (1.0 - t.h2[k] * t.h2[k]);
        }
        let mut d_h1 = [0.0; HIDDEN_1];
        for (k, dz) in d_z2.iter().enumerate() {
            grad[B2 + k] += dz;
            let row = W2 + k * HIDDEN_1;
            for (i, dh) in d_h1.iter_mut().enumerate() {
                grad[row + i] += dz * t.h1[i];
                *dh += dz * p[row + i];
            }
        }
        for (k, dh) in d_h1.iter().enumerate() {
            let dz = dh * (1.0 - t.h1[k] * t.h1[k]);
            grad[B1 + k] += dz;
            for i in 0..INPUTS {
                grad[W1 + k * INPUTS + i] += dz * sample.input[i];
            }
        }
    }
    (loss, grad)
}

/// Outcome of a gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Batch loss before the step.
    pub loss: f64,
    /// Set when the gradient was not finite and the parameters were kept.
    pub skipped: bool,
}

/// One plain gradient-descent step on the batch MSE.
pub fn train_step(params: &mut MlpParams, batch: &[TrainingSample], learning_rate: f64, w_cap: f64) -> StepReport {
    let (loss, grad) = loss_and_gradient(params, batch, w_cap);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return StepReport { loss, skipped: true };
    }
    for (w, g) in params.flat.iter_mut().zip(&grad) {
        *w -= learning_rate * g;
    }
    StepReport { loss, skipped: false }
}

/// Direction in which the fairness term pushes prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FairnessSign {
    /// A link slower than the median gets a positive offset (price rises).
    Literal,
    /// A link slower than the median gets a negative offset, so it can afford
    /// more air time and its ETT falls toward the others.
    #[default]
    Equalizing,
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 || v[n / 2 - 1] == v[n / 2] {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Fairness part of the loss: compares the link's ETT with the median ETT.
pub fn fairness_term(own_ett: f64, all_etts: &[f64], q_step: f64, sign: FairnessSign) -> f64 {
    let Some(mid) = median(all_etts) else {
        return 0.0;
    };
    if own_ett == mid || (own_ett - mid).abs() <= MEDIAN_BAND * mid.abs() {
        return 0.0;
    }
    let above = own_ett > mid;
    match (sign, above) {
        (FairnessSign::Literal, true) | (FairnessSign::Equalizing, false) => q_step,
        (FairnessSign::Literal, false) | (FairnessSign::Equalizing, true) => -q_step,
    }
}

/// Collision part of the loss.
pub fn collision_term(collided: bool, v1: f64, v2: f64) -> f64 {
    if collided {
        v1
    } else {
        v2
    }
}

/// Both loss parts for one (link, channel) sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSignal {
    pub q1: f64,
    pub q2: f64,
    pub target_offset: f64,
}

impl LossSignal {
    pub fn new(q1: f64, q2: f64) -> Self {
        Self {
            q1,
            q2,
            target_offset: q1 + q2,
        }
    }

    /// Squared loss of the sample, `(q1 + q2)^2`.
    pub fn loss(&self) -> f64 {
        self.target_offset * self.target_offset
    }
}
