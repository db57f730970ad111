//! Discrete-time world model.
//!
//! One call to [`World::step`] is one slot. For every active link the world
//! senses the WiFi load of each channel, asks the link's network for prices,
//! and solves the link's allocation problem. It then checks the channels for
//! over-subscription, computes realized rates and ETTs, feeds the fairness
//! and collision signals back into each network, and runs a federated round
//! when the clock hits the period. Links join and leave between slots.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::allocator::{channel_rate, solve_allocation, Allocation, LinkConstraints, LinkProblem};
use crate::baseline::{centralized_max_throughput, CentralizedProblem};
use crate::federated::{apply_blend, Coordinator, FederatedConfig};
use crate::price_net::{
    self, collision_term, fairness_term, forward, normalize_input, train_step, FairnessSign, InitSource, LossSignal,
    MlpParams, NormalizationSpec, TrainingSample,
};
use crate::wifi::{find_peak, ChannelState, WifiPeak, WifiPhyParams, DEFAULT_N_LIMIT};
use crate::{Error, Result};

/// Default slack when testing a channel for over-subscription.
pub const DEFAULT_COLLISION_TOLERANCE: f64 = 1e-9;

/// Static description of one unlicensed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub bandwidth: f64,
    pub phy: WifiPhyParams,
    /// Piecewise-constant WiFi user count: `(first_slot, users)`, sorted by slot.
    pub wifi_schedule: Vec<(u64, u32)>,
}

impl ChannelSpec {
    pub fn constant(bandwidth: f64, wifi_users: u32) -> Self {
        Self {
            bandwidth,
            phy: WifiPhyParams::default(),
            wifi_schedule: vec![(0, wifi_users)],
        }
    }

    pub fn wifi_users_at(&self, slot: u64) -> u32 {
        self.wifi_schedule
            .iter()
            .take_while(|(from, _)| *from <= slot)
            .last()
            .or(self.wifi_schedule.first())
            .map_or(0, |(_, n)| *n)
    }
}

/// Static description of one D2D link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: u32,
    /// Traffic load `l^D` in bits.
    pub traffic_load: f64,
    /// Linear power gain per channel.
    pub gains: Vec<f64>,
    /// First slot in which the link transmits.
    pub join_slot: u64,
    /// First slot in which the link no longer transmits.
    pub leave_slot: Option<u64>,
    /// Start from the coordinator snapshot when joining (if one exists).
    pub federated_init: bool,
}

impl LinkSpec {
    pub fn new(id: u32, traffic_load: f64, gains: Vec<f64>) -> Self {
        Self {
            id,
            traffic_load,
            gains,
            join_slot: 1,
            leave_slot: None,
            federated_init: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConfig {
    pub learning_rate: f64,
    /// Output cap `w`.
    pub price_cap: f64,
    /// Fairness step `q`.
    pub fairness_step: f64,
    /// `v1`, applied on collision.
    pub collision_penalty: f64,
    /// `v2`, applied otherwise.
    pub no_collision_reward: f64,
    pub fairness_sign: FairnessSign,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            learning_rate: price_net::DEFAULT_LEARNING_RATE,
            price_cap: price_net::DEFAULT_PRICE_CAP,
            fairness_step: price_net::DEFAULT_FAIRNESS_STEP,
            collision_penalty: price_net::DEFAULT_COLLISION_PENALTY,
            no_collision_reward: price_net::DEFAULT_NO_COLLISION_REWARD,
            fairness_sign: FairnessSign::Equalizing,
        }
    }
}

/// Everything needed to run a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub channels: Vec<ChannelSpec>,
    pub links: Vec<LinkSpec>,
    pub constraints: LinkConstraints,
    /// `N0`, W/Hz.
    pub noise_psd: f64,
    pub seed: u64,
    pub horizon: u64,
    pub learning: LearningConfig,
    pub federated: FederatedConfig,
    pub n_limit: u32,
    pub collision_tolerance: f64,
    /// Standard deviation of additive noise on the sensed WiFi user count.
    pub wifi_count_noise_std: f64,
    /// Explicit input scales; derived from the links when absent.
    pub normalization: Option<NormalizationSpec>,
}

impl Scenario {
    pub fn new(channels: Vec<ChannelSpec>, links: Vec<LinkSpec>, constraints: LinkConstraints, noise_psd: f64) -> Self {
        Self {
            channels,
            links,
            constraints,
            noise_psd,
            seed: 0,
            horizon: 1000,
            learning: LearningConfig::default(),
            federated: FederatedConfig::default(),
            n_limit: DEFAULT_N_LIMIT,
            collision_tolerance: DEFAULT_COLLISION_TOLERANCE,
            wifi_count_noise_std: 0.0,
            normalization: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Scenario(msg));
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        let m = self.channels.len();
        for (j, ch) in self.channels.iter().enumerate() {
            if !(ch.bandwidth.is_finite() && ch.bandwidth > 0.0) {
                return bad(format!("channel {j}: bandwidth must be positive"));
            }
            ch.phy
                .validate()
                .map_err(|e| Error::Scenario(format!("channel {j}: {e}")))?;
            if ch.wifi_schedule.is_empty() {
                return bad(format!("channel {j}: empty WiFi schedule"));
            }
            if ch.wifi_schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad(format!(
                    "channel {j}: WiFi schedule must be strictly increasing in slot"
                ));
            }
        }
        let mut ids: Vec<u32> = Vec::new();
        for l in &self.links {
            if l.gains.len() != m {
                return bad(format!("link {}: {} gains for {m} channels", l.id, l.gains.len()));
            }
            if l.gains.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
                return bad(format!("link {}: gains must be finite and non-negative", l.id));
            }
            if !(l.traffic_load.is_finite() && l.traffic_load >= 0.0) {
                return bad(format!("link {}: traffic load must be non-negative", l.id));
            }
            if let Some(leave) = l.leave_slot {
                if leave <= l.join_slot {
                    return bad(format!("link {}: join_slot must precede leave_slot", l.id));
                }
            }
            if ids.contains(&l.id) {
                return bad(format!("duplicate link id {}", l.id));
            }
            ids.push(l.id);
        }
        self.constraints
            .validate()
            .map_err(|e| Error::Scenario(format!("constraints: {e}")))?;
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return bad("noise_psd must be positive".into());
        }
        if self.n_limit == 0 {
            return bad("n_limit must be at least 1".into());
        }
        let l = &self.learning;
        if !(l.learning_rate.is_finite() && l.learning_rate >= 0.0) {
            return bad("learning rate must be non-negative".into());
        }
        if !(l.price_cap.is_finite() && l.price_cap > 0.0) {
            return bad("price cap must be positive".into());
        }
        if !(l.collision_penalty >= l.no_collision_reward) {
            return bad("collision penalty must not be below the no-collision reward".into());
        }
        if !(self.wifi_count_noise_std >= 0.0) {
            return bad("WiFi count noise must be non-negative".into());
        }
        self.federated
            .validate()
            .map_err(|e| Error::Scenario(format!("federated: {e}")))?;
        self.normalization_spec()?.validate()
    }

    /// Input scales: explicit, or from the largest load and the gain range.
    pub fn normalization_spec(&self) -> Result<NormalizationSpec> {
        if let Some(n) = self.normalization {
            return Ok(n);
        }
        let max_traffic_load = self.links.iter().map(|l| l.traffic_load).fold(0.0, f64::max);
        let positive = self
            .links
            .iter()
            .flat_map(|l| l.gains.iter().copied())
            .filter(|h| *h > 0.0);
        let (mut lo, mut hi) = positive.fold((f64::INFINITY, 0.0_f64), |(lo, hi), h| (lo.min(h), hi.max(h)));
        if !lo.is_finite() {
            (lo, hi) = (1.0, 1.0);
        }
        if hi <= lo {
            // A single gain value: centre it in a two-decade window.
            (lo, hi) = (lo / 10.0, hi * 10.0);
        }
        Ok(NormalizationSpec {
            max_traffic_load: if max_traffic_load > 0.0 { max_traffic_load } else { 1.0 },
            gain_min: lo,
            gain_max: hi,
        })
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.bandwidth).collect()
    }
}

/// Which allocation scheme drives the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Distributed price-based allocation with learned prices.
    #[default]
    PriceBased,
    /// Centralized max-throughput allocation (no prices, no learning).
    Centralized,
}

/// A link currently in the system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkAgent {
    pub spec: LinkSpec,
    pub params: MlpParams,
    /// Accumulated loss since the last federated round.
    pub q_sum: f64,
    pub trained_slots: u64,
    /// Whether the initial parameters came from a coordinator snapshot.
    pub warm_started: bool,
}

/// Per-link record of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub id: u32,
    pub traffic_load: f64,
    /// Prices per channel (empty under the centralized scheme).
    pub prices: Vec<f64>,
    pub allocation: Allocation,
    /// Realized rate per channel after conflict resolution.
    pub channel_rates: Vec<f64>,
    pub realized_rate: f64,
    pub ett: f64,
    pub collided: Vec<bool>,
    pub q1: f64,
    pub q2: Vec<f64>,
    /// Mean squared loss over the channel batch.
    pub loss: f64,
    /// Accumulated loss at the end of the slot, before any federated reset.
    pub q_sum: f64,
    /// Blend factor applied if a federated round ran this slot.
    pub beta: Option<f64>,
    pub warm_started: bool,
    pub training_skipped: bool,
}

/// Per-channel record of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub wifi_users: u32,
    /// WiFi traffic load `l^U`: the guaranteed off-period fraction.
    pub load: f64,
    pub accessible: bool,
    /// Requested total time share.
    pub demand: f64,
    /// Common scale applied to all links' time shares.
    pub scale: f64,
    /// Fraction of the frame left to WiFi.
    pub wifi_fraction: f64,
    pub conflicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// 1-based slot number.
    pub slot: u64,
    pub links: Vec<LinkRecord>,
    pub channels: Vec<ChannelRecord>,
    pub federated_round: bool,
}

/// Per-link and per-channel collision flags.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionReport {
    /// `flags[i][j]`: link `i` transmitted on conflicted channel `j`.
    pub flags: Vec<Vec<bool>>,
    pub conflicted: Vec<bool>,
    pub demand: Vec<f64>,
}

/// A channel is in conflict when the requested time shares exceed the
/// off-period bound `1 - load` by more than `tol`.
pub fn detect_collisions(thetas: &[Vec<f64>], loads: &[f64], tol: f64) -> CollisionReport {
    let m = loads.len();
    let demand: Vec<f64> = (0..m).map(|j| thetas.iter().map(|t| t[j]).sum()).collect();
    let conflicted: Vec<bool> = (0..m).map(|j| demand[j] > (1.0 - loads[j]) + tol).collect();
    let flags = thetas
        .iter()
        .map(|t| (0..m).map(|j| conflicted[j] && t[j] > 0.0).collect())
        .collect();
    CollisionReport {
        flags,
        conflicted,
        demand,
    }
}

/// Rates and WiFi share after over-subscribed channels are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Realized {
    pub link_rates: Vec<f64>,
    /// `channel_rates[i][j]` after scaling.
    pub channel_rates: Vec<Vec<f64>>,
    pub scale: Vec<f64>,
    pub wifi_fraction: Vec<f64>,
}

/// Where the requested shares add up to more than the whole frame, every
/// link's share (and its time-averaged power) is scaled by the same factor
/// so the total is exactly one; the on-period power is unchanged, so each
/// channel's rate scales by the same factor. WiFi keeps what is left.
pub fn realized_outcomes(thetas: &[Vec<f64>], channel_rates: &[Vec<f64>], m: usize) -> Realized {
    let demand: Vec<f64> = (0..m).map(|j| thetas.iter().map(|t| t[j]).sum()).collect();
    let scale: Vec<f64> = demand.iter().map(|&d| if d > 1.0 { 1.0 / d } else { 1.0 }).collect();
    let wifi_fraction = demand.iter().zip(&scale).map(|(d, s)| (1.0 - d * s).max(0.0)).collect();
    let channel_rates: Vec<Vec<f64>> = channel_rates
        .iter()
        .map(|r| r.iter().zip(&scale).map(|(v, s)| v * s).collect())
        .collect();
    Realized {
        link_rates: channel_rates.iter().map(|r| r.iter().sum()).collect(),
        channel_rates,
        scale,
        wifi_fraction,
    }
}

/// Expected transmission time `l^D / R`; infinite when the link got nothing.
pub fn compute_ett(traffic_load: f64, realized_rate: f64) -> f64 {
    if traffic_load == 0.0 {
        0.0
    } else if realized_rate > 0.0 {
        traffic_load / realized_rate
    } else {
        f64::INFINITY
    }
}

/// Cached centralized solution keyed on the inputs that can change.
#[derive(Debug, Clone)]
struct CentralizedCache {
    ids: Vec<u32>,
    loads: Vec<f64>,
    allocations: Vec<Allocation>,
}

#[derive(Debug, Clone)]
pub struct World {
    scenario: Scenario,
    scheme: Scheme,
    peaks: Vec<WifiPeak>,
    norms: NormalizationSpec,
    links: Vec<LinkAgent>,
    pending: Vec<LinkSpec>,
    coordinator: Coordinator,
    rng: ChaCha8Rng,
    slot: u64,
    cache: Option<CentralizedCache>,
}

impl World {
    pub fn new(scenario: Scenario, scheme: Scheme) -> Result<Self> {
        scenario.validate()?;
        let peaks = scenario
            .channels
            .iter()
            .map(|c| find_peak(&c.phy, scenario.n_limit))
            .collect::<Result<Vec<_>>>()?;
        let norms = scenario.normalization_spec()?;
        let mut pending = scenario.links.clone();
        pending.sort_by_key(|l| (l.join_slot, l.id));
        let mut world = Self {
            coordinator: Coordinator::new(scenario.federated),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            scenario,
            scheme,
            peaks,
            norms,
            links: Vec::new(),
            pending,
            slot: 0,
            cache: None,
        };
        world.admit_and_retire(1)?;
        Ok(world)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Number of completed slots.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn links(&self) -> &[LinkAgent] {
        &self.links
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn peaks(&self) -> &[WifiPeak] {
        &self.peaks
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.norms
    }

    /// Adds a link that transmits from the next slot on.
    pub fn join_link(&mut self, spec: LinkSpec, use_federated_init: bool) -> Result<()> {
        if spec.gains.len() != self.scenario.channels.len() {
            return Err(Error::Scenario(format!("link {}: wrong number of gains", spec.id)));
        }
        if self.links.iter().any(|l| l.spec.id == spec.id) {
            return Err(Error::Scenario(format!("link {} is already active", spec.id)));
        }
        let random = InitSource::Random {
            seed: self.scenario.seed,
            stream: u64::from(spec.id),
        };
        let (params, warm_started) = if use_federated_init && self.scenario.federated.enabled {
            let ws = self.coordinator.warm_start(|| price_net::init_params(random));
            (ws.params, ws.from_snapshot)
        } else {
            (price_net::init_params(random), false)
        };
        self.links.push(LinkAgent {
            spec,
            params,
            q_sum: 0.0,
            trained_slots: 0,
            warm_started,
        });
        Ok(())
    }

    /// Removes an active link. Returns whether it was present.
    pub fn leave_link(&mut self, id: u32) -> bool {
        let before = self.links.len();
        self.links.retain(|l| l.spec.id != id);
        before != self.links.len()
    }

    /// Applies scheduled joins and leaves so the link set is right for `next_slot`.
    fn admit_and_retire(&mut self, next_slot: u64) -> Result<()> {
        self.links
            .retain(|l| l.spec.leave_slot.is_none_or(|leave| leave > next_slot));
        while self.pending.first().is_some_and(|l| l.join_slot <= next_slot) {
            let spec = self.pending.remove(0);
            if spec.leave_slot.is_some_and(|leave| leave <= next_slot) {
                continue;
            }
            let warm = spec.federated_init;
            self.join_link(spec, warm)?;
        }
        Ok(())
    }

    /// WiFi state of every channel for `slot`.
    fn sense(&mut self, slot: u64) -> Result<Vec<ChannelState>> {
        let noise = if self.scenario.wifi_count_noise_std > 0.0 {
            Some(Normal::new(0.0, self.scenario.wifi_count_noise_std).map_err(|_| Error::Domain("noise std"))?)
        } else {
            None
        };
        let mut states = Vec::with_capacity(self.scenario.channels.len());
        for (j, ch) in self.scenario.channels.iter().enumerate() {
            let mut users = ch.wifi_users_at(slot);
            if let Some(n) = &noise {
                let noisy = f64::from(users) + n.sample(&mut self.rng);
                users = libm::round(noisy).max(0.0) as u32;
            }
            states.push(ChannelState::sense(ch.bandwidth, users, &ch.phy, &self.peaks[j])?);
        }
        Ok(states)
    }

    /// Advances the world by one slot.
    pub fn step(&mut self) -> Result<SlotRecord> {
        let t = self.slot + 1;
        let states = self.sense(t)?;
        let loads: Vec<f64> = states.iter().map(|s| s.load).collect();
        let mut record = match self.scheme {
            Scheme::PriceBased => self.step_price_based(t, &loads)?,
            Scheme::Centralized => self.step_centralized(t, &loads)?,
        };
        if record.links.iter().any(|l| !l.realized_rate.is_finite()) {
            return Err(Error::Domain("non-finite realized rate"));
        }
        record.channels = states
            .iter()
            .zip(&record.channels)
            .map(|(s, c)| ChannelRecord {
                wifi_users: s.wifi_users,
                load: s.load,
                accessible: s.accessible,
                ..c.clone()
            })
            .collect();
        self.slot = t;
        self.admit_and_retire(t + 1)?;
        Ok(record)
    }

    fn step_price_based(&mut self, t: u64, loads: &[f64]) -> Result<SlotRecord> {
        let m = loads.len();
        let bandwidths = self.scenario.bandwidths();
        let learning = self.scenario.learning;
        let noise_psd = self.scenario.noise_psd;
        let constraints = self.scenario.constraints;
        let accumulation = self.scenario.federated.accumulation;

        // Price inference and per-link optimisation.
        let mut inputs = Vec::with_capacity(self.links.len());
        let mut prices = Vec::with_capacity(self.links.len());
        let mut allocations = Vec::with_capacity(self.links.len());
        for agent in &self.links {
            let x: Vec<[f64; 3]> = (0..m)
                .map(|j| {
                    let h = agent.spec.gains[j].max(self.norms.gain_min);
                    normalize_input(agent.spec.traffic_load, loads[j], h, &self.norms)
                })
                .collect::<Result<_>>()?;
            let c: Vec<f64> = x
                .iter()
                .map(|xi| forward(&agent.params, xi, learning.price_cap))
                .collect::<Result<_>>()?;
            let alloc = solve_allocation(&LinkProblem {
                prices: &c,
                loads,
                gains: &agent.spec.gains,
                bandwidths: &bandwidths,
                noise_psd,
                constraints,
            })?;
            inputs.push(x);
            prices.push(c);
            allocations.push(alloc);
        }

        let (collisions, realized, etts) = self.resolve(&allocations, loads, &bandwidths);

        // Loss feedback, training and accumulation.
        let mut link_records = Vec::with_capacity(self.links.len());
        for (i, agent) in self.links.iter_mut().enumerate() {
            let q1 = fairness_term(etts[i], &etts, learning.fairness_step, learning.fairness_sign);
            let signals: Vec<LossSignal> = (0..m)
                .map(|j| {
                    let q2 = collision_term(
                        collisions.flags[i][j],
                        learning.collision_penalty,
                        learning.no_collision_reward,
                    );
                    LossSignal::new(q1, q2)
                })
                .collect();
            let batch: Vec<TrainingSample> = (0..m)
                .map(|j| TrainingSample::from_offset(inputs[i][j], prices[i][j], signals[j].target_offset))
                .collect();
            let report = train_step(&mut agent.params, &batch, learning.learning_rate, learning.price_cap);
            agent.trained_slots += 1;
            agent.q_sum += signals
                .iter()
                .map(|s| accumulation.sample(s.target_offset))
                .sum::<f64>();
            link_records.push(LinkRecord {
                id: agent.spec.id,
                traffic_load: agent.spec.traffic_load,
                prices: prices[i].clone(),
                allocation: allocations[i].clone(),
                channel_rates: realized.channel_rates[i].clone(),
                realized_rate: realized.link_rates[i],
                ett: etts[i],
                collided: collisions.flags[i].clone(),
                q1,
                q2: signals.iter().map(|s| s.q2).collect(),
                loss: signals.iter().map(LossSignal::loss).sum::<f64>() / m as f64,
                q_sum: agent.q_sum,
                beta: None,
                warm_started: agent.warm_started,
                training_skipped: report.skipped,
            });
        }

        let federated_round = self.scenario.federated.is_round(t) && self.federated_round(&mut link_records)?;
        Ok(SlotRecord {
            slot: t,
            links: link_records,
            channels: channel_records(&collisions, &realized),
            federated_round,
        })
    }

    /// Averages eligible networks, blends every contributor toward the
    /// average and resets all accumulated losses.
    fn federated_round(&mut self, records: &mut [LinkRecord]) -> Result<bool> {
        let min_slots = self.scenario.federated.min_training_slots;
        let contributors: Vec<usize> = (0..self.links.len())
            .filter(|&i| self.links[i].trained_slots >= min_slots)
            .collect();
        if contributors.is_empty() {
            return Ok(false);
        }
        let params: Vec<&MlpParams> = contributors.iter().map(|&i| &self.links[i].params).collect();
        let snapshot = self.coordinator.aggregate(&params)?.clone();
        for &i in &contributors {
            let beta = self.coordinator.beta(self.links[i].q_sum);
            self.links[i].params = apply_blend(&self.links[i].params, &snapshot, beta);
            records[i].beta = Some(beta);
        }
        for link in &mut self.links {
            link.q_sum = 0.0;
        }
        Ok(true)
    }

    fn step_centralized(&mut self, t: u64, loads: &[f64]) -> Result<SlotRecord> {
        let m = loads.len();
        let bandwidths = self.scenario.bandwidths();
        let ids: Vec<u32> = self.links.iter().map(|l| l.spec.id).collect();
        let cached = self
            .cache
            .as_ref()
            .filter(|c| c.ids == ids && c.loads == loads)
            .map(|c| c.allocations.clone());
        let allocations = match cached {
            Some(a) => a,
            None if self.links.is_empty() => Vec::new(),
            None => {
                let gains: Vec<Vec<f64>> = self.links.iter().map(|l| l.spec.gains.clone()).collect();
                let solution = centralized_max_throughput(&CentralizedProblem {
                    loads,
                    bandwidths: &bandwidths,
                    gains: &gains,
                    noise_psd: self.scenario.noise_psd,
                    constraints: self.scenario.constraints,
                })?;
                self.cache = Some(CentralizedCache {
                    ids,
                    loads: loads.to_vec(),
                    allocations: solution.allocations.clone(),
                });
                solution.allocations
            }
        };
        let (collisions, realized, etts) = self.resolve(&allocations, loads, &bandwidths);
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, agent)| LinkRecord {
                id: agent.spec.id,
                traffic_load: agent.spec.traffic_load,
                prices: Vec::new(),
                allocation: allocations[i].clone(),
                channel_rates: realized.channel_rates[i].clone(),
                realized_rate: realized.link_rates[i],
                ett: etts[i],
                collided: collisions.flags[i].clone(),
                q1: 0.0,
                q2: vec![0.0; m],
                loss: 0.0,
                q_sum: 0.0,
                beta: None,
                warm_started: false,
                training_skipped: false,
            })
            .collect();
        Ok(SlotRecord {
            slot: t,
            links,
            channels: channel_records(&collisions, &realized),
            federated_round: false,
        })
    }

    /// Collision detection, realized rates and ETTs (the coordinator's view).
    fn resolve(
        &self,
        allocations: &[Allocation],
        loads: &[f64],
        bandwidths: &[f64],
    ) -> (CollisionReport, Realized, Vec<f64>) {
        let m = loads.len();
        let thetas: Vec<Vec<f64>> = allocations.iter().map(|a| a.theta.clone()).collect();
        let collisions = detect_collisions(&thetas, loads, self.scenario.collision_tolerance);
        let channel_rates: Vec<Vec<f64>> = self
            .links
            .iter()
            .zip(allocations)
            .map(|(agent, a)| {
                (0..m)
                    .map(|j| {
                        channel_rate(
                            a.theta[j],
                            a.eta[j],
                            agent.spec.gains[j],
                            bandwidths[j],
                            self.scenario.noise_psd,
                        )
                    })
                    .collect()
            })
            .collect();
        let realized = realized_outcomes(&thetas, &channel_rates, m);
        let etts = self
            .links
            .iter()
            .zip(&realized.link_rates)
            .map(|(agent, r)| compute_ett(agent.spec.traffic_load, *r))
            .collect();
        (collisions, realized, etts)
    }

    /// Runs `slots` more slots, collecting the records.
    pub fn run(&mut self, slots: u64) -> Result<Vec<SlotRecord>> {
        (0..slots).map(|_| self.step()).collect()
    }
}

fn channel_records(collisions: &CollisionReport, realized: &Realized) -> Vec<ChannelRecord> {
    (0..collisions.demand.len())
        .map(|j| ChannelRecord {
            wifi_users: 0,
            load: 0.0,
            accessible: true,
            demand: collisions.demand[j],
            scale: realized.scale[j],
            wifi_fraction: realized.wifi_fraction[j],
            conflicted: collisions.conflicted[j],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{dbm_to_watts, noise_psd_from_total_dbm};

    fn constraints() -> LinkConstraints {
        LinkConstraints {
            total_power: dbm_to_watts(35.0),
            per_channel_power: dbm_to_watts(23.0),
            money: 1.0,
        }
    }

    fn scenario(links: Vec<LinkSpec>, channels: Vec<ChannelSpec>) -> Scenario {
        Scenario::new(channels, links, constraints(), noise_psd_from_total_dbm(-95.0, 20e6))
    }

    #[test]
    fn collision_rules() {
        let r = detect_collisions(&[vec![0.6]], &[0.4], 1e-9);
        assert_eq!(r.flags, vec![vec![false]]);
        let r = detect_collisions(&[vec![0.3], vec![0.3]], &[0.4], 1e-9);
        assert_eq!(r.conflicted, vec![false]);
        let r = detect_collisions(&[vec![0.7, 0.0], vec![0.7, 0.1]], &[0.4, 0.4], 1e-9);
        assert_eq!(r.flags, vec![vec![true, false], vec![true, false]]);
    }

    #[test]
    fn realized_outcome_rules() {
        let r = realized_outcomes(&[vec![0.3], vec![0.2]], &[vec![10.0], vec![5.0]], 1);
        assert_eq!(r.link_rates, vec![10.0, 5.0]);
        assert!((r.wifi_fraction[0] - 0.5).abs() < 1e-15);
        let r = realized_outcomes(&[vec![0.6], vec![0.6]], &[vec![12.0], vec![6.0]], 1);
        assert!((r.scale[0] - 1.0 / 1.2).abs() < 1e-15);
        assert_eq!(r.wifi_fraction[0], 0.0);
        assert!((r.link_rates[0] - 10.0).abs() < 1e-12);
        // Mild overlap: WiFi keeps slightly less than its guarantee.
        let load = 0.4;
        let r = realized_outcomes(&[vec![0.31], vec![0.31]], &[vec![1.0], vec![1.0]], 1);
        assert!((r.wifi_fraction[0] - (load - 0.02)).abs() < 1e-12);
    }

    #[test]
    fn ett_rules() {
        assert_eq!(compute_ett(0.0, 5.0), 0.0);
        assert_eq!(compute_ett(1e9, 1e8), 10.0);
        assert_eq!(compute_ett(1e9, 0.0), f64::INFINITY);
    }

    #[test]
    fn empty_world_only_advances_clock() {
        let mut w = World::new(
            scenario(vec![], vec![ChannelSpec::constant(20e6, 1)]),
            Scheme::PriceBased,
        )
        .unwrap();
        let r = w.step().unwrap();
        assert_eq!(r.slot, 1);
        assert!(r.links.is_empty());
        assert_eq!(w.slot(), 1);
    }

    #[test]
    fn frozen_single_link_is_stationary() {
        let mut s = scenario(
            vec![LinkSpec::new(0, 5e8, vec![1e-9])],
            vec![ChannelSpec::constant(20e6, 2)],
        );
        s.learning.learning_rate = 0.0;
        s.federated.enabled = false;
        let mut w = World::new(s, Scheme::PriceBased).unwrap();
        let records = w.run(5).unwrap();
        for r in &records[1..] {
            assert_eq!(r.links[0].allocation, records[0].links[0].allocation);
            assert_eq!(r.links[0].prices, records[0].links[0].prices);
        }
    }

    #[test]
    fn wifi_schedule_lookup() {
        let ch = ChannelSpec {
            wifi_schedule: vec![(0, 1), (100, 3)],
            ..ChannelSpec::constant(20e6, 0)
        };
        assert_eq!(ch.wifi_users_at(1), 1);
        assert_eq!(ch.wifi_users_at(99), 1);
        assert_eq!(ch.wifi_users_at(100), 3);
    }

    #[test]
    fn scheduled_join_and_leave() {
        let mut late = LinkSpec::new(1, 2e8, vec![1e-9]);
        late.join_slot = 3;
        late.leave_slot = Some(5);
        let s = scenario(
            vec![LinkSpec::new(0, 5e8, vec![1e-9]), late],
            vec![ChannelSpec::constant(20e6, 1)],
        );
        let mut w = World::new(s, Scheme::PriceBased).unwrap();
        let counts: Vec<usize> = w.run(6).unwrap().iter().map(|r| r.links.len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 2, 1, 1]);
    }

    #[test]
    fn rejoin_without_federation_reuses_seeded_init() {
        let mut s = scenario(
            vec![LinkSpec::new(4, 5e8, vec![1e-9])],
            vec![ChannelSpec::constant(20e6, 1)],
        );
        s.federated.enabled = false;
        let mut w = World::new(s, Scheme::PriceBased).unwrap();
        let first = w.links()[0].params.clone();
        w.run(3).unwrap();
        assert!(w.leave_link(4));
        w.join_link(LinkSpec::new(4, 5e8, vec![1e-9]), true).unwrap();
        assert_eq!(w.links()[0].params, first);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut bad = LinkSpec::new(0, 5e8, vec![1e-9]);
        bad.join_slot = 4;
        bad.leave_slot = Some(4);
        let s = scenario(vec![bad], vec![ChannelSpec::constant(20e6, 1)]);
        assert!(matches!(World::new(s, Scheme::PriceBased), Err(Error::Scenario(_))));
        let s = scenario(
            vec![LinkSpec::new(0, 5e8, vec![1e-9, 1e-9])],
            vec![ChannelSpec::constant(20e6, 1)],
        );
        assert!(World::new(s, Scheme::PriceBased).is_err());
        let s = scenario(vec![], vec![]);
        assert!(World::new(s, Scheme::PriceBased).is_err());
    }

    #[test]
    fn overflowing_rate_is_an_error() {
        let s = scenario(
            vec![LinkSpec::new(0, 5e8, vec![1e308]), LinkSpec::new(1, 5e8, vec![1e-9])],
            vec![ChannelSpec::constant(20e6, 1)],
        );
        let mut w = World::new(s, Scheme::PriceBased).unwrap();
        assert!(matches!(w.step(), Err(Error::Domain(_))));
    }
}
