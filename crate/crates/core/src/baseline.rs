//! Centralized max-throughput allocation used as the comparison scheme.
//!
//! Maximises the total rate of all links subject to the shared off-period of
//! every channel and each link's power budgets, with no prices. For fixed time
//! shares the power problem splits into one water-filling per link, which is
//! solved exactly; the time shares are found by projected gradient ascent on
//! the resulting concave function, using the envelope gradient.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use crate::allocator::{airtime_marginal, channel_rate, Allocation, LinkConstraints};
use crate::{Error, Result};

/// Initial step on the normalized gradient.
pub const STEP_SCALE: f64 = 0.1;
/// Stop when the best objective improved by less than this (relative) ...
pub const STOP_REL_IMPROVEMENT: f64 = 1e-8;
/// ... over this many iterations.
pub const STOP_WINDOW: usize = 50;
pub const MIN_ITERATIONS: usize = 200;
pub const MAX_ITERATIONS: usize = 20_000;

const BISECT_ITER: usize = 200;
/// Share used in place of zero when the power budget is slack.
const THETA_FLOOR: f64 = 1e-12;

/// Snapshot of everything the centralized solver needs.
#[derive(Debug, Clone, Copy)]
pub struct CentralizedProblem<'a> {
    pub loads: &'a [f64],
    pub bandwidths: &'a [f64],
    /// `gains[i][j]`, linear.
    pub gains: &'a [Vec<f64>],
    pub noise_psd: f64,
    pub constraints: LinkConstraints,
}

impl CentralizedProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        let m = self.loads.len();
        if self.bandwidths.len() != m || self.gains.iter().any(|g| g.len() != m) {
            return Err(Error::Dimension("loads, bandwidths and gains differ in length"));
        }
        if self.loads.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Domain("loads must lie in [0, 1]"));
        }
        if self.bandwidths.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Domain("bandwidths must be positive"));
        }
        if self.gains.iter().flatten().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::Domain("gains must be finite and non-negative"));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(Error::Domain("noise_psd must be positive"));
        }
        self.constraints.validate()
    }

    fn usable(&self, i: usize, j: usize) -> bool {
        self.loads[j] < 1.0 && self.gains[i][j] > 0.0
    }

    fn snr_per_watt(&self, i: usize, j: usize) -> f64 {
        self.gains[i][j] / (self.noise_psd * self.bandwidths[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedSolution {
    pub allocations: Vec<Allocation>,
    /// Sum of link rates, bits/s.
    pub throughput: f64,
    pub iterations: usize,
}

/// Optimal powers of one link for fixed shares, with the power multiplier.
///
/// Returns `(eta, lambda)`; `lambda == 0` when the total budget is slack.
fn water_fill(p: &CentralizedProblem<'_>, i: usize, theta: &[f64]) -> (Vec<f64>, f64) {
    let m = theta.len();
    let c = &p.constraints;
    let active: Vec<usize> = (0..m).filter(|&j| theta[j] > 0.0 && p.usable(i, j)).collect();
    let mut eta = vec![0.0; m];
    if active.is_empty() {
        return (eta, 0.0);
    }
    if active.len() as f64 * c.per_channel_power <= c.total_power {
        for &j in &active {
            eta[j] = c.per_channel_power;
        }
        return (eta, 0.0);
    }
    let level = |lambda: f64, j: usize| {
        let a = p.snr_per_watt(i, j);
        (theta[j] * (p.bandwidths[j] / (lambda * LN_2) - 1.0 / a)).clamp(0.0, c.per_channel_power)
    };
    let total = |lambda: f64| active.iter().map(|&j| level(lambda, j)).sum::<f64>();
    // Marginal at zero power, above which nothing is spent.
    let top = active
        .iter()
        .map(|&j| p.bandwidths[j] * p.snr_per_watt(i, j) / LN_2)
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (libm::log(top) - 700.0, libm::log(top));
    if total(libm::exp(lo)) <= c.total_power {
        // Even a vanishing multiplier cannot spend the budget.
        for &j in &active {
            eta[j] = level(libm::exp(lo), j);
        }
        return (eta, 0.0);
    }
    for _ in 0..BISECT_ITER {
        let mid = 0.5 * (lo + hi);
        if total(libm::exp(mid)) > c.total_power {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let lambda = libm::exp(hi);
    for &j in &active {
        eta[j] = level(lambda, j);
    }
    (eta, lambda)
}

/// Projects `x` onto `{0 <= x_k, x_k = 0 where !mask_k, sum x <= cap}`.
fn project_capped_simplex(x: &mut [f64], mask: &[bool], cap: f64) {
    for (v, &ok) in x.iter_mut().zip(mask) {
        *v = if ok { v.max(0.0) } else { 0.0 };
    }
    let sum: f64 = x.iter().sum();
    if sum <= cap {
        return;
    }
    let shifted = |tau: f64| x.iter().map(|v| (v - tau).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, x.iter().copied().fold(0.0, f64::max));
    for _ in 0..BISECT_ITER {
        let mid = 0.5 * (lo + hi);
        if shifted(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - hi).max(0.0);
    }
}

struct Evaluation {
    eta: Vec<Vec<f64>>,
    rates: Vec<f64>,
    /// Envelope gradient in the shares, scaled by `1 / sum B`.
    grad: Vec<Vec<f64>>,
}

fn evaluate(p: &CentralizedProblem<'_>, theta: &[Vec<f64>], total_bw: f64) -> Evaluation {
    let m = p.loads.len();
    let cp = &p.constraints;
    let mut eta = Vec::with_capacity(theta.len());
    let mut rates = Vec::with_capacity(theta.len());
    let mut grad = Vec::with_capacity(theta.len());
    for (i, th) in theta.iter().enumerate() {
        let (e, lambda) = water_fill(p, i, th);
        let mut r = 0.0;
        let mut g = vec![0.0; m];
        for j in 0..m {
            if !p.usable(i, j) {
                continue;
            }
            let a = p.snr_per_watt(i, j);
            r += channel_rate(th[j], e[j], p.gains[i][j], p.bandwidths[j], p.noise_psd);
            let snr = if th[j] > 0.0 {
                a * e[j] / th[j]
            } else if lambda > 0.0 {
                (a * p.bandwidths[j] / (lambda * LN_2) - 1.0).max(0.0)
            } else {
                a * cp.per_channel_power / THETA_FLOOR
            };
            g[j] = p.bandwidths[j] * airtime_marginal(snr) / total_bw;
        }
        eta.push(e);
        rates.push(r);
        grad.push(g);
    }
    Evaluation { eta, rates, grad }
}

/// Centralized max-throughput allocation over all links.
///
/// Channels at full WiFi load and zero-gain pairs get no share. A link with
/// no usable channel is returned as an infeasible zero allocation.
pub fn centralized_max_throughput(p: &CentralizedProblem<'_>) -> Result<CentralizedSolution> {
    p.validate()?;
    let n = p.gains.len();
    let m = p.loads.len();
    let total_bw: f64 = p.bandwidths.iter().sum();
    let masks: Vec<Vec<bool>> = (0..m).map(|j| (0..n).map(|i| p.usable(i, j)).collect()).collect();

    // Symmetric feasible start: each channel's off-period split evenly.
    let mut theta = vec![vec![0.0; m]; n];
    for j in 0..m {
        let users = masks[j].iter().filter(|&&u| u).count();
        for i in 0..n {
            if masks[j][i] {
                theta[i][j] = (1.0 - p.loads[j]) / users as f64;
            }
        }
    }

    let mut eval = evaluate(p, &theta, total_bw);
    let mut best_obj: f64 = eval.rates.iter().sum::<f64>() / total_bw;
    let mut best = (theta.clone(), eval.eta, eval.rates);
    let mut history = vec![best_obj];
    let mut iterations = 0;
    let mut column = vec![0.0; n];
    for t in 1..=MAX_ITERATIONS {
        iterations = t;
        let gmax = eval.grad.iter().flatten().fold(0.0, |a: f64, g| a.max(g.abs()));
        if gmax == 0.0 {
            break;
        }
        let step = STEP_SCALE / libm::sqrt(t as f64) / gmax;
        for j in 0..m {
            for i in 0..n {
                column[i] = theta[i][j] + step * eval.grad[i][j];
            }
            project_capped_simplex(&mut column, &masks[j], 1.0 - p.loads[j]);
            for i in 0..n {
                theta[i][j] = column[i];
            }
        }
        eval = evaluate(p, &theta, total_bw);
        let obj = eval.rates.iter().sum::<f64>() / total_bw;
        if obj > best_obj {
            best_obj = obj;
            best = (theta.clone(), eval.eta.clone(), eval.rates.clone());
        }
        history.push(best_obj);
        if t >= MIN_ITERATIONS.max(STOP_WINDOW) {
            let past = history[t - STOP_WINDOW];
            if best_obj - past <= STOP_REL_IMPROVEMENT * best_obj.abs() {
                break;
            }
        }
    }

    let (theta, eta, rates) = best;
    let allocations: Vec<Allocation> = (0..n)
        .map(|i| {
            let infeasible = !(0..m).any(|j| p.usable(i, j));
            let mut eta_i = eta[i].clone();
            for j in 0..m {
                if theta[i][j] == 0.0 {
                    eta_i[j] = 0.0;
                }
            }
            Allocation {
                theta: theta[i].clone(),
                eta: eta_i,
                rate: rates[i],
                infeasible,
            }
        })
        .collect();
    Ok(CentralizedSolution {
        throughput: rates.iter().sum(),
        allocations,
        iterations,
    })
}

/// Largest violation of the shared-channel and power constraints.
pub fn max_violation(p: &CentralizedProblem<'_>, allocations: &[Allocation]) -> f64 {
    let c = &p.constraints;
    let mut worst: f64 = 0.0;
    for (j, load) in p.loads.iter().enumerate() {
        let used: f64 = allocations.iter().map(|a| a.theta[j]).sum();
        worst = worst.max(used - (1.0 - load));
    }
    for a in allocations {
        for j in 0..p.loads.len() {
            worst = worst
                .max(-a.theta[j])
                .max(-a.eta[j])
                .max(a.eta[j] - c.per_channel_power);
        }
        worst = worst.max(a.power_used() - c.total_power);
    }
    worst
}
