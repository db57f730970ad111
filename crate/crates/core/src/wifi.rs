//! Analytic model of the WiFi side of a channel.
//!
//! Saturation throughput comes from Bianchi's two-equation DCF model (basic
//! access, no RTS/CTS). The peak of the throughput curve defines how many
//! contenders a channel can carry, and the per-user throughput at that peak is
//! the guarantee the duty cycle has to preserve. The resulting traffic load is
//! the minimum fraction of each frame that must stay "off" for D2D traffic.

use crate::{Error, Result};

/// Bisection tolerance on the conditional collision probability.
const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 200;

/// Default upper bound on the contender count scanned for the peak.
pub const DEFAULT_N_LIMIT: u32 = 64;

/// DCF parameters feeding the Bianchi model. Times are seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WifiPhyParams {
    /// Initial contention window `W` in slots.
    pub cw_min: u32,
    /// Maximum back-off stage `m`; the window grows to `2^m * W`.
    pub max_backoff_stage: u32,
    pub slot_time: f64,
    pub sifs: f64,
    pub difs: f64,
    /// PHY + MAC header airtime.
    pub header_time: f64,
    pub ack_time: f64,
    pub payload_bits: f64,
    pub propagation_delay: f64,
    /// Rate at which the payload is sent, bits/s.
    pub phy_rate: f64,
}

impl Default for WifiPhyParams {
    fn default() -> Self {
        Self {
            cw_min: 32,
            max_backoff_stage: 3,
            slot_time: 9e-6,
            sifs: 16e-6,
            difs: 34e-6,
            header_time: 52e-6,
            ack_time: 44e-6,
            payload_bits: 12_000.0,
            propagation_delay: 1e-6,
            phy_rate: 54e6,
        }
    }
}

impl WifiPhyParams {
    pub fn validate(&self) -> Result<()> {
        if self.cw_min < 2 {
            return Err(Error::InvalidPhy("cw_min must be at least 2"));
        }
        if self.max_backoff_stage > 16 {
            return Err(Error::InvalidPhy("max_backoff_stage above 16"));
        }
        let times = [
            self.slot_time,
            self.sifs,
            self.difs,
            self.header_time,
            self.ack_time,
            self.propagation_delay,
        ];
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidPhy("all timings must be positive"));
        }
        if !(self.payload_bits.is_finite() && self.payload_bits > 0.0) {
            return Err(Error::InvalidPhy("payload_bits must be positive"));
        }
        if !(self.phy_rate.is_finite() && self.phy_rate > 0.0) {
            return Err(Error::InvalidPhy("phy_rate must be positive"));
        }
        Ok(())
    }

    pub fn payload_time(&self) -> f64 {
        self.payload_bits / self.phy_rate
    }

    /// Channel busy time of a successful exchange (basic access).
    pub fn success_time(&self) -> f64 {
        self.header_time
            + self.payload_time()
            + self.sifs
            + self.propagation_delay
            + self.ack_time
            + self.difs
            + self.propagation_delay
    }

    /// Channel busy time of a collision (basic access).
    pub fn collision_time(&self) -> f64 {
        self.header_time + self.payload_time() + self.difs + self.propagation_delay
    }

    /// Per-slot transmission probability for a given conditional collision
    /// probability `p`. Uses the series form of the back-off sum so `p = 1/2`
    /// needs no special case.
    fn transmission_probability(&self, p: f64) -> f64 {
        let w = f64::from(self.cw_min);
        let mut series = 0.0;
        let mut term = 1.0;
        for _ in 0..self.max_backoff_stage {
            series += term;
            term *= 2.0 * p;
        }
        2.0 / ((w + 1.0) + p * w * series)
    }
}

/// Solved DCF operating point for `n` saturated contenders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfOperatingPoint {
    /// Per-slot transmission probability.
    pub tau: f64,
    /// Conditional collision probability.
    pub collision_probability: f64,
}

/// Solves the `tau(p)` / `p(tau)` fixed point by bisection on `p`.
pub fn dcf_fixed_point(n: u32, phy: &WifiPhyParams) -> Result<DcfOperatingPoint> {
    phy.validate()?;
    if n <= 1 {
        return Ok(DcfOperatingPoint {
            tau: phy.transmission_probability(0.0),
            collision_probability: 0.0,
        });
    }
    let others = (n - 1) as i32;
    // f is increasing in p: tau(p) decreases, so the implied collision
    // probability decreases while p itself increases.
    let f = |p: f64| {
        let tau = phy.transmission_probability(p);
        p - (1.0 - libm::pow(1.0 - tau, f64::from(others)))
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        return Err(Error::FixedPointDiverged { n });
    }
    let mut converged = false;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if !v.is_finite() {
            return Err(Error::FixedPointDiverged { n });
        }
        if v > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= FIXED_POINT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FixedPointDiverged { n });
    }
    let p = 0.5 * (lo + hi);
    Ok(DcfOperatingPoint {
        tau: phy.transmission_probability(p),
        collision_probability: p,
    })
}

/// Aggregate saturation throughput S(n) in bits/s.
pub fn bianchi_throughput(n: u32, phy: &WifiPhyParams) -> Result<f64> {
    phy.validate()?;
    if n == 0 {
        return Ok(0.0);
    }
    let op = dcf_fixed_point(n, phy)?;
    let tau = op.tau;
    let nf = f64::from(n);
    let idle = libm::pow(1.0 - tau, nf);
    let p_tr = 1.0 - idle;
    let p_success_slot = nf * tau * libm::pow(1.0 - tau, nf - 1.0);
    let expected_slot =
        idle * phy.slot_time + p_success_slot * phy.success_time() + (p_tr - p_success_slot) * phy.collision_time();
    Ok(p_success_slot * phy.payload_bits / expected_slot)
}

/// Throughput curve S(1..=n_limit).
pub fn throughput_curve(phy: &WifiPhyParams, n_limit: u32) -> Result<alloc::vec::Vec<f64>> {
    (1..=n_limit).map(|n| bianchi_throughput(n, phy)).collect()
}

/// Peak of the throughput curve: the contender count the channel can carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WifiPeak {
    pub n_max: u32,
    /// Aggregate throughput at the peak (bits/s).
    pub r_max_total: f64,
    /// Per-user throughput at the peak (bits/s); the WiFi guarantee.
    pub r_hat_max: f64,
}

/// Index (1-based count) of the first maximum of a throughput curve sampled at
/// n = 1, 2, ...
pub fn argmax_peak(curve: &[f64]) -> Option<WifiPeak> {
    let (idx, &best) = curve
        .iter()
        .enumerate()
        .fold(None::<(usize, &f64)>, |acc, (i, s)| match acc {
            Some((_, b)) if *s <= *b => acc,
            _ => Some((i, s)),
        })?;
    let n_max = idx as u32 + 1;
    Some(WifiPeak {
        n_max,
        r_max_total: best,
        r_hat_max: best / f64::from(n_max),
    })
}

pub fn find_peak(phy: &WifiPhyParams, n_limit: u32) -> Result<WifiPeak> {
    if n_limit == 0 {
        return Err(Error::Domain("n_limit must be at least 1"));
    }
    let curve = throughput_curve(phy, n_limit)?;
    argmax_peak(&curve).ok_or(Error::Domain("empty throughput curve"))
}

/// Sensed WiFi state of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelLoad {
    /// Minimum off-period fraction in [0, 1].
    pub load: f64,
    /// Whether D2D links may use the channel at all.
    pub accessible: bool,
}

/// Traffic load for `n` active WiFi users given a precomputed peak.
pub fn traffic_load_from_peak(n: u32, phy: &WifiPhyParams, peak: &WifiPeak) -> Result<ChannelLoad> {
    if n == 0 {
        return Ok(ChannelLoad {
            load: 0.0,
            accessible: true,
        });
    }
    if n >= peak.n_max {
        return Ok(ChannelLoad {
            load: 1.0,
            accessible: false,
        });
    }
    let per_user = bianchi_throughput(n, phy)? / f64::from(n);
    let load = (peak.r_hat_max / per_user).clamp(0.0, 1.0);
    Ok(ChannelLoad { load, accessible: true })
}

pub fn channel_traffic_load(n: u32, phy: &WifiPhyParams, n_limit: u32) -> Result<ChannelLoad> {
    let peak = find_peak(phy, n_limit)?;
    traffic_load_from_peak(n, phy, &peak)
}

/// Full sensed state of an unlicensed channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub bandwidth: f64,
    pub wifi_users: u32,
    pub load: f64,
    pub n_max: u32,
    pub r_max_total: f64,
    pub r_hat_max: f64,
    pub accessible: bool,
}

impl ChannelState {
    pub fn sense(bandwidth: f64, wifi_users: u32, phy: &WifiPhyParams, peak: &WifiPeak) -> Result<Self> {
        let ChannelLoad { load, accessible } = traffic_load_from_peak(wifi_users, phy, peak)?;
        Ok(Self {
            bandwidth,
            wifi_users,
            load,
            n_max: peak.n_max,
            r_max_total: peak.r_max_total,
            r_hat_max: peak.r_hat_max,
            accessible,
        })
    }
}
