//! Per-link joint time-share / power allocation.
//!
//! A link maximises `R = sum_j theta_j B_j log2(1 + eta_j h_j / (N0 B_j theta_j))`
//! over time shares `theta` and time-averaged powers `eta = theta * p`, subject to
//!
//! * `theta_j <= 1 - load_j` (WiFi off-period),
//! * `sum eta_j <= p_c` and `eta_j <= p_u`,
//! * `sum theta_j c_j <= C` (money spent at the channel prices).
//!
//! The objective is a sum of perspectives of a concave function and therefore
//! jointly concave. [`solve_allocation`] exploits the KKT structure: for fixed
//! multipliers on the power and money constraints every channel has a closed
//! form response, except for one scalar transcendental equation that fixes the
//! power level at which extra air time stops paying for its price. Both
//! multipliers are found by nested bisection (money outside, power inside) and
//! the primal point is recovered by convex combination at the final brackets,
//! which is exact because the objective is linear along rays `(theta, eta) * k`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use crate::{Error, Result};

const ROOT_MAX_ITER: usize = 200;
const MULTIPLIER_MAX_ITER: usize = 200;
/// Relative width at which a multiplier bracket is considered closed.
const MULTIPLIER_REL_TOL: f64 = 1e-12;
const SCALAR_ROOT_TOL: f64 = 1e-10;
/// Feasibility slack used by checks and the KKT report.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConstraints {
    /// `p_c`, total power budget across channels (W).
    pub total_power: f64,
    /// `p_u`, regulatory per-channel limit (W).
    pub per_channel_power: f64,
    /// `C`, money available per slot.
    pub money: f64,
}

impl LinkConstraints {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.total_power) || !ok(self.per_channel_power) {
            return Err(Error::Domain("power budgets must be positive"));
        }
        if !(self.money.is_finite() && self.money >= 0.0) {
            return Err(Error::Domain("money must be non-negative"));
        }
        Ok(())
    }
}

/// Inputs of one link's allocation problem.
#[derive(Debug, Clone, Copy)]
pub struct LinkProblem<'a> {
    pub prices: &'a [f64],
    pub loads: &'a [f64],
    pub gains: &'a [f64],
    pub bandwidths: &'a [f64],
    /// Noise power spectral density `N0` (W/Hz).
    pub noise_psd: f64,
    pub constraints: LinkConstraints,
}

impl LinkProblem<'_> {
    pub fn channels(&self) -> usize {
        self.loads.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.loads.len();
        if self.prices.len() != m || self.gains.len() != m || self.bandwidths.len() != m {
            return Err(Error::Dimension("prices, loads, gains and bandwidths differ in length"));
        }
        if self.prices.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Domain("prices must be finite and non-negative"));
        }
        if self.loads.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Domain("loads must lie in [0, 1]"));
        }
        if self.gains.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::Domain("gains must be finite and non-negative"));
        }
        if self.bandwidths.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Domain("bandwidths must be positive"));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(Error::Domain("noise_psd must be positive"));
        }
        self.constraints.validate()
    }

    /// Whether channel `j` can carry any rate at all.
    pub fn usable(&self, j: usize) -> bool {
        self.loads[j] < 1.0 && self.gains[j] > 0.0
    }

    /// `h / (N0 B)`: SNR per watt of time-averaged power at full time share.
    fn snr_per_watt(&self, j: usize) -> f64 {
        self.gains[j] / (self.noise_psd * self.bandwidths[j])
    }

    fn cap(&self, j: usize) -> f64 {
        1.0 - self.loads[j]
    }
}

/// Joint allocation of one link over all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    /// Rate at `(theta, eta)` in bits/s.
    pub rate: f64,
    /// Set when no channel was usable or the money budget was zero.
    pub infeasible: bool,
}

impl Allocation {
    pub fn zeros(m: usize, infeasible: bool) -> Self {
        Self {
            theta: vec![0.0; m],
            eta: vec![0.0; m],
            rate: 0.0,
            infeasible,
        }
    }

    /// Transmit power during the on-period, `eta / theta` (0 when idle).
    pub fn power(&self, j: usize) -> f64 {
        if self.theta[j] > 0.0 {
            self.eta[j] / self.theta[j]
        } else {
            0.0
        }
    }

    pub fn money_spent(&self, prices: &[f64]) -> f64 {
        self.theta.iter().zip(prices).map(|(t, c)| t * c).sum()
    }

    pub fn power_used(&self) -> f64 {
        self.eta.iter().sum()
    }

    /// Largest constraint violation (0 when feasible).
    pub fn max_violation(&self, problem: &LinkProblem<'_>) -> f64 {
        let c = &problem.constraints;
        let mut worst: f64 = 0.0;
        for j in 0..problem.channels() {
            worst = worst.max(-self.theta[j]).max(-self.eta[j]);
            worst = worst.max(self.theta[j] - problem.cap(j));
            worst = worst.max(self.eta[j] - c.per_channel_power);
            if self.theta[j] == 0.0 {
                worst = worst.max(self.eta[j]);
            }
        }
        worst = worst.max(self.power_used() - c.total_power);
        worst.max(self.money_spent(problem.prices) - c.money)
    }
}

/// Rate of a single channel term, `theta B log2(1 + eta h / (N0 B theta))`.
pub fn channel_rate(theta: f64, eta: f64, gain: f64, bandwidth: f64, noise_psd: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    theta * bandwidth * libm::log2(1.0 + eta * gain / (noise_psd * bandwidth * theta))
}

/// Link rate summed over channels; idle channels contribute nothing.
pub fn rate(theta: &[f64], eta: &[f64], gains: &[f64], bandwidths: &[f64], noise_psd: f64) -> Result<f64> {
    let m = theta.len();
    if eta.len() != m || gains.len() != m || bandwidths.len() != m {
        return Err(Error::Dimension("rate inputs differ in length"));
    }
    if !(noise_psd > 0.0) {
        return Err(Error::Domain("noise_psd must be positive"));
    }
    let mut total = 0.0;
    for j in 0..m {
        let (t, e, h, b) = (theta[j], eta[j], gains[j], bandwidths[j]);
        if t < 0.0 || e < 0.0 || h < 0.0 || !(b > 0.0) || t > 1.0 {
            return Err(Error::Domain("rate inputs must be non-negative with theta <= 1"));
        }
        total += channel_rate(t, e, h, b, noise_psd);
    }
    Ok(total)
}

/// Marginal rate of air time per hertz, in bits/s/Hz, at SNR `x` during the
/// on-period: `log2(1 + x) - x / ((1 + x) ln 2)`. Increasing in `x`, zero at 0.
pub fn airtime_marginal(x: f64) -> f64 {
    libm::log2(1.0 + x) - x / ((1.0 + x) * LN_2)
}

/// Inverse of [`airtime_marginal`]: the on-period SNR at which one more unit of
/// air time is worth exactly `y` bits/s/Hz. Returns `inf` when `y` is beyond
/// anything a finite SNR reaches.
fn airtime_marginal_inv(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    // Work in u = ln x, where g is smooth and monotone; g(x) ~ log2(x) - 1/ln2
    // for large x, so the root lies inside [-60, 709] for any finite answer.
    let (mut lo, mut hi) = (-60.0_f64, 709.0_f64);
    if airtime_marginal(libm::exp(hi)) < y {
        return f64::INFINITY;
    }
    if airtime_marginal(libm::exp(lo)) >= y {
        return libm::exp(lo);
    }
    // Safeguarded Newton: fall back to bisection whenever a step leaves the bracket.
    // g(x) ~ x^2 / (2 ln2) near 0 and ~ log2(x) - 1/ln2 for large x.
    let guess = if y < 1.0 {
        0.5 * libm::log(2.0 * LN_2 * y)
    } else {
        y * LN_2 + 1.0
    };
    let mut u = guess.clamp(lo, hi);
    for _ in 0..ROOT_MAX_ITER {
        let x = libm::exp(u);
        let f = airtime_marginal(x) - y;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let slope = x * x / ((1.0 + x) * (1.0 + x) * LN_2);
        let mut next = u - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - u).abs();
        u = next;
        if step <= SCALAR_ROOT_TOL * 1e-4 || hi - lo <= SCALAR_ROOT_TOL * 1e-4 {
            break;
        }
    }
    libm::exp(u)
}

/// Per-channel data used inside the dual loops.
#[derive(Debug, Clone, Copy)]
struct ChannelTerm {
    index: usize,
    snr_per_watt: f64,
    bandwidth: f64,
    cap: f64,
    price: f64,
}

#[derive(Debug, Clone)]
struct Primal {
    theta: Vec<f64>,
    eta: Vec<f64>,
}

impl Primal {
    fn zeros(m: usize) -> Self {
        Self {
            theta: vec![0.0; m],
            eta: vec![0.0; m],
        }
    }

    fn power(&self) -> f64 {
        self.eta.iter().sum()
    }

    fn money(&self, terms: &[ChannelTerm]) -> f64 {
        terms.iter().map(|t| t.price * self.theta[t.index]).sum()
    }

    /// `weight * self + (1 - weight) * other`.
    fn mix(&self, other: &Primal, weight: f64) -> Primal {
        let w = weight.clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| w * a + (1.0 - w) * b;
        Primal {
            theta: self.theta.iter().zip(&other.theta).map(|(a, b)| lerp(*a, *b)).collect(),
            eta: self.eta.iter().zip(&other.eta).map(|(a, b)| lerp(*a, *b)).collect(),
        }
    }
}

/// Best response of one channel for power multiplier `mu_power` when the
/// money multiplier has already been folded into `snr_threshold`, the SNR at
/// which air time stops paying for itself.
fn channel_response(term: &ChannelTerm, p_u: f64, mu_power: f64, snr_threshold: f64) -> (f64, f64) {
    let a = term.snr_per_watt;
    // Water level: on-period power maximising B log2(1 + a s) - mu s.
    let level = if mu_power > 0.0 {
        term.bandwidth / (mu_power * LN_2) - 1.0 / a
    } else {
        f64::INFINITY
    };
    if !(a * level > snr_threshold) {
        return (0.0, 0.0);
    }
    if level.is_finite() && term.cap * level <= p_u {
        return (term.cap, term.cap * level);
    }
    let theta = if snr_threshold > 0.0 {
        term.cap.min(a * p_u / snr_threshold)
    } else {
        term.cap
    };
    (theta, p_u)
}

fn respond_all(terms: &[ChannelTerm], m: usize, p_u: f64, mu_power: f64, thresholds: &[f64]) -> Primal {
    let mut out = Primal::zeros(m);
    for (term, &x) in terms.iter().zip(thresholds) {
        let (t, e) = channel_response(term, p_u, mu_power, x);
        out.theta[term.index] = t;
        out.eta[term.index] = e;
    }
    out
}

fn power_at(terms: &[ChannelTerm], p_u: f64, mu_power: f64, thresholds: &[f64]) -> f64 {
    terms
        .iter()
        .zip(thresholds)
        .map(|(term, &x)| channel_response(term, p_u, mu_power, x).1)
        .sum()
}

fn bracket_closed(lo: f64, hi: f64) -> bool {
    hi - lo <= MULTIPLIER_REL_TOL * hi.abs().max(f64::MIN_POSITIVE)
}

/// Solves the power-constrained problem for a fixed money multiplier.
fn solve_for_money_multiplier(terms: &[ChannelTerm], m: usize, c: &LinkConstraints, mu_money: f64) -> Primal {
    let thresholds: Vec<f64> = terms
        .iter()
        .map(|t| airtime_marginal_inv(mu_money * t.price / t.bandwidth))
        .collect();
    let p_u = c.per_channel_power;
    let free = respond_all(terms, m, p_u, 0.0, &thresholds);
    if free.power() <= c.total_power {
        return free;
    }
    // Above B a / ln2 the water level is negative on every channel.
    let mut hi = terms
        .iter()
        .map(|t| t.bandwidth * t.snr_per_watt / LN_2)
        .fold(0.0, f64::max);
    let mut lo = 0.0;
    for _ in 0..MULTIPLIER_MAX_ITER {
        if bracket_closed(lo, hi) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if power_at(terms, p_u, mid, &thresholds) > c.total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let at_lo = if lo > 0.0 {
        respond_all(terms, m, p_u, lo, &thresholds)
    } else {
        free
    };
    let at_hi = respond_all(terms, m, p_u, hi, &thresholds);
    let (p_lo, p_hi) = (at_lo.power(), at_hi.power());
    if p_lo > p_hi {
        at_lo.mix(&at_hi, (c.total_power - p_hi) / (p_lo - p_hi))
    } else {
        at_hi
    }
}

/// Maximises the link rate for the given prices (KKT structure + nested
/// bisection on the power and money multipliers).
pub fn solve_allocation(problem: &LinkProblem<'_>) -> Result<Allocation> {
    problem.validate()?;
    let m = problem.channels();
    let c = problem.constraints;
    let terms: Vec<ChannelTerm> = (0..m)
        .filter(|&j| problem.usable(j))
        .map(|j| ChannelTerm {
            index: j,
            snr_per_watt: problem.snr_per_watt(j),
            bandwidth: problem.bandwidths[j],
            cap: problem.cap(j),
            price: problem.prices[j],
        })
        .collect();
    let free_money = terms.iter().any(|t| t.price == 0.0);
    if terms.is_empty() || (c.money <= 0.0 && !free_money) {
        return Ok(Allocation::zeros(m, true));
    }

    let unpriced = solve_for_money_multiplier(&terms, m, &c, 0.0);
    let primal = if unpriced.money(&terms) <= c.money {
        unpriced
    } else {
        // Scale guess: the multiplier at which the best channel's threshold
        // equals its full-power SNR.
        let scale = terms
            .iter()
            .filter(|t| t.price > 0.0)
            .map(|t| t.bandwidth * airtime_marginal(t.snr_per_watt * c.per_channel_power) / t.price)
            .fold(0.0, f64::max);
        let mut hi = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
        let mut at_hi = solve_for_money_multiplier(&terms, m, &c, hi);
        let mut lo = 0.0;
        let mut at_lo = unpriced;
        // Money spent falls to zero as the multiplier grows without bound.
        let mut grow = 0;
        while at_hi.money(&terms) > c.money && grow < 2048 {
            lo = hi;
            at_lo = at_hi;
            hi *= 4.0;
            at_hi = solve_for_money_multiplier(&terms, m, &c, hi);
            grow += 1;
        }
        if lo == 0.0 {
            let mut shrink = 0;
            loop {
                let probe = hi / 4.0;
                let x = solve_for_money_multiplier(&terms, m, &c, probe);
                if x.money(&terms) > c.money || shrink >= 2048 {
                    lo = probe;
                    at_lo = x;
                    break;
                }
                hi = probe;
                at_hi = x;
                shrink += 1;
            }
        }
        for _ in 0..MULTIPLIER_MAX_ITER {
            if bracket_closed(lo, hi) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let x = solve_for_money_multiplier(&terms, m, &c, mid);
            if x.money(&terms) > c.money {
                lo = mid;
                at_lo = x;
            } else {
                hi = mid;
                at_hi = x;
            }
        }
        let (m_lo, m_hi) = (at_lo.money(&terms), at_hi.money(&terms));
        if m_lo > m_hi {
            at_lo.mix(&at_hi, (c.money - m_hi) / (m_lo - m_hi))
        } else {
            at_hi
        }
    };

    let Primal { mut theta, mut eta } = primal;
    for j in 0..m {
        if theta[j] <= 0.0 {
            theta[j] = 0.0;
            eta[j] = 0.0;
        }
    }
    let rate = rate(&theta, &eta, problem.gains, problem.bandwidths, problem.noise_psd)?;
    Ok(Allocation {
        theta,
        eta,
        rate,
        infeasible: false,
    })
}

/// Exhaustive grid search used as an independent lower-bound oracle.
///
/// The time share and power of every usable channel but the last are taken
/// from a uniform grid with `resolution` steps. Because the rate increases in
/// each `theta_j` and each `eta_j` separately, the last channel is filled to
/// the most the remaining money and power allow. Cost grows as
/// `resolution^(2 (M - 1))`; at most three channels are accepted.
pub fn brute_force_allocation(problem: &LinkProblem<'_>, resolution: usize) -> Result<Allocation> {
    const MAX_CHANNELS: usize = 3;
    problem.validate()?;
    let m = problem.channels();
    if m > MAX_CHANNELS {
        return Err(Error::TooManyChannels {
            got: m,
            max: MAX_CHANNELS,
        });
    }
    if resolution == 0 {
        return Err(Error::Domain("grid resolution must be positive"));
    }
    let c = problem.constraints;
    let usable: Vec<usize> = (0..m).filter(|&j| problem.usable(j)).collect();
    let Some((&last, free)) = usable.split_last() else {
        return Ok(Allocation::zeros(m, true));
    };
    let eta_max = c.per_channel_power.min(c.total_power);
    let steps = resolution + 1;
    let dims = free.len() * 2;
    let total = steps.pow(dims as u32);

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut theta = vec![0.0; m];
    let mut eta = vec![0.0; m];
    for code in 0..total {
        let mut rest = code;
        for &j in free {
            let ti = rest % steps;
            rest /= steps;
            let ei = rest % steps;
            rest /= steps;
            theta[j] = problem.cap(j) * ti as f64 / resolution as f64;
            eta[j] = if theta[j] > 0.0 {
                eta_max * ei as f64 / resolution as f64
            } else {
                0.0
            };
        }
        let money_left = c.money - free.iter().map(|&j| theta[j] * problem.prices[j]).sum::<f64>();
        let power_left = c.total_power - free.iter().map(|&j| eta[j]).sum::<f64>();
        if money_left < -FEAS_TOL || power_left < -FEAS_TOL {
            continue;
        }
        let price = problem.prices[last];
        theta[last] = if price > 0.0 {
            problem.cap(last).min(money_left.max(0.0) / price)
        } else {
            problem.cap(last)
        };
        eta[last] = if theta[last] > 0.0 {
            c.per_channel_power.min(power_left.max(0.0))
        } else {
            0.0
        };
        let value = rate(&theta, &eta, problem.gains, problem.bandwidths, problem.noise_psd)?;
        if best.as_ref().is_none_or(|(b, _, _)| value > *b) {
            best = Some((value, theta.clone(), eta.clone()));
        }
    }
    let (rate, theta, eta) = best.expect("the all-zero grid point is always feasible");
    Ok(Allocation {
        theta,
        eta,
        rate,
        infeasible: false,
    })
}

/// KKT certificate of an allocation with recovered multipliers.
///
/// Stationarity residuals are relative to the size of the corresponding
/// partial derivative; complementary-slackness products are relative to the
/// multiplier times the constraint scale.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `mu1_j`, time-share cap multipliers.
    pub mu_cap: Vec<f64>,
    /// `mu2`, total power multiplier.
    pub mu_power: f64,
    /// `mu3_j`, per-channel power multipliers.
    pub mu_channel_power: Vec<f64>,
    /// `mu4`, money multiplier.
    pub mu_money: f64,
    /// Relative residual of the theta stationarity condition per channel.
    pub stationarity_theta: Vec<f64>,
    /// Relative residual of the eta stationarity condition per channel.
    pub stationarity_eta: Vec<f64>,
    /// Complementary slackness: caps, total power, channel power, money.
    pub slackness_cap: Vec<f64>,
    pub slackness_power: f64,
    pub slackness_channel_power: Vec<f64>,
    pub slackness_money: f64,
    /// Relative gain from opening an idle channel (positive means not optimal).
    pub idle_channel_gain: Vec<f64>,
    /// Largest negative part among recovered multipliers (relative).
    pub dual_infeasibility: f64,
    pub primal_infeasibility: f64,
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity_theta
            .iter()
            .chain(&self.stationarity_eta)
            .chain(&self.idle_channel_gain)
            .fold(0.0, |a, b| a.max(*b))
    }

    pub fn max_slackness(&self) -> f64 {
        self.slackness_cap
            .iter()
            .chain(&self.slackness_channel_power)
            .chain([&self.slackness_power, &self.slackness_money])
            .fold(0.0, |a, b| a.max(b.abs()))
    }

    /// Largest of every residual in the report.
    pub fn max_residual(&self) -> f64 {
        self.max_stationarity()
            .max(self.max_slackness())
            .max(self.dual_infeasibility)
            .max(self.primal_infeasibility)
    }
}

/// Recovers multipliers from `alloc` and measures how far it is from
/// satisfying the KKT conditions of the link problem.
pub fn kkt_residuals(alloc: &Allocation, problem: &LinkProblem<'_>) -> Result<KktReport> {
    problem.validate()?;
    let m = problem.channels();
    if alloc.theta.len() != m || alloc.eta.len() != m {
        return Err(Error::Dimension("allocation and problem differ in channel count"));
    }
    let c = problem.constraints;
    let p_u = c.per_channel_power;
    let active: Vec<usize> = (0..m).filter(|&j| problem.usable(j) && alloc.theta[j] > 0.0).collect();

    // Partial derivatives of R at the allocation.
    let mut d_theta = vec![0.0; m];
    let mut d_eta = vec![0.0; m];
    for &j in &active {
        let a = problem.snr_per_watt(j);
        let x = a * alloc.eta[j] / alloc.theta[j];
        d_theta[j] = problem.bandwidths[j] * airtime_marginal(x);
        d_eta[j] = problem.bandwidths[j] * a / (LN_2 * (1.0 + x));
    }

    let at_cap = |j: usize| alloc.theta[j] >= problem.cap(j) - FEAS_TOL;
    let at_p_u = |j: usize| alloc.eta[j] >= p_u * (1.0 - FEAS_TOL);
    let power_tight = alloc.power_used() >= c.total_power * (1.0 - FEAS_TOL);
    let money_tight = alloc.money_spent(problem.prices) >= c.money * (1.0 - FEAS_TOL);

    let unsaturated: Vec<usize> = active.iter().copied().filter(|&j| !at_p_u(j)).collect();
    let mu_power = if !power_tight {
        0.0
    } else if !unsaturated.is_empty() {
        unsaturated.iter().map(|&j| d_eta[j]).sum::<f64>() / unsaturated.len() as f64
    } else {
        let bound = active.iter().map(|&j| d_eta[j]).fold(f64::INFINITY, f64::min);
        if bound.is_finite() {
            bound
        } else {
            0.0
        }
    };
    let interior: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&j| !at_cap(j) && problem.prices[j] > 0.0)
        .collect();
    let mu_money = if !money_tight {
        0.0
    } else if !interior.is_empty() {
        interior.iter().map(|&j| d_theta[j] / problem.prices[j]).sum::<f64>() / interior.len() as f64
    } else {
        let bound = active
            .iter()
            .filter(|&&j| problem.prices[j] > 0.0)
            .map(|&j| d_theta[j] / problem.prices[j])
            .fold(f64::INFINITY, f64::min);
        if bound.is_finite() {
            bound
        } else {
            0.0
        }
    };

    let mut report = KktReport {
        mu_cap: vec![0.0; m],
        mu_power,
        mu_channel_power: vec![0.0; m],
        mu_money,
        stationarity_theta: vec![0.0; m],
        stationarity_eta: vec![0.0; m],
        slackness_cap: vec![0.0; m],
        slackness_power: 0.0,
        slackness_channel_power: vec![0.0; m],
        slackness_money: 0.0,
        idle_channel_gain: vec![0.0; m],
        dual_infeasibility: 0.0,
        primal_infeasibility: alloc.max_violation(problem).max(0.0),
    };

    for j in 0..m {
        if !problem.usable(j) {
            continue;
        }
        let bandwidth = problem.bandwidths[j];
        if alloc.theta[j] > 0.0 {
            let money_part = mu_money * problem.prices[j];
            let scale_t = d_theta[j].max(money_part).max(bandwidth * 1e-12);
            if at_cap(j) {
                let mu1 = d_theta[j] - money_part;
                report.mu_cap[j] = mu1.max(0.0);
                report.dual_infeasibility = report.dual_infeasibility.max((-mu1).max(0.0) / scale_t);
                report.slackness_cap[j] = report.mu_cap[j] * (problem.cap(j) - alloc.theta[j]) / scale_t;
            } else {
                report.stationarity_theta[j] = (d_theta[j] - money_part).abs() / scale_t;
            }
            let scale_e = d_eta[j].max(mu_power).max(f64::MIN_POSITIVE);
            if at_p_u(j) {
                let mu3 = d_eta[j] - mu_power;
                report.mu_channel_power[j] = mu3.max(0.0);
                report.dual_infeasibility = report.dual_infeasibility.max((-mu3).max(0.0) / scale_e);
                report.slackness_channel_power[j] = report.mu_channel_power[j] * (p_u - alloc.eta[j]) / (scale_e * p_u);
            } else {
                report.stationarity_eta[j] = (d_eta[j] - mu_power).abs() / scale_e;
            }
        } else {
            // Opening an idle channel along its best ray must not pay off.
            let a = problem.snr_per_watt(j);
            let gain = if mu_power > 0.0 {
                let level = (bandwidth / (mu_power * LN_2) - 1.0 / a).max(0.0);
                bandwidth * airtime_marginal(a * level)
            } else {
                f64::INFINITY
            };
            let cost = mu_money * problem.prices[j];
            report.idle_channel_gain[j] = if gain.is_infinite() {
                1.0
            } else {
                (gain - cost).max(0.0) / gain.max(cost).max(bandwidth * 1e-12)
            };
        }
    }
    report.slackness_power = if mu_power > 0.0 {
        (c.total_power - alloc.power_used()) / c.total_power
    } else {
        0.0
    };
    report.slackness_money = if mu_money > 0.0 && c.money > 0.0 {
        (c.money - alloc.money_spent(problem.prices)) / c.money
    } else {
        0.0
    };
    Ok(report)
}
