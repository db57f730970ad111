//! Scenario files.
//!
//! A config is one TOML document. Every learning and link-budget constant has
//! a default, so a minimal file only lists channels and links. Powers are given
//! in dBm and converted to watts here; nothing past this module sees dBm.

use std::fmt;
use std::path::Path;

use d2du_core::allocator::LinkConstraints;
use d2du_core::federated::{FederatedConfig, LossAccumulation};
use d2du_core::price_net::{self, FairnessSign, NormalizationSpec};
use d2du_core::sim::{ChannelSpec, LearningConfig, LinkSpec, Scenario, Scheme, DEFAULT_COLLISION_TOLERANCE};
use d2du_core::units::{dbm_to_watts, noise_psd_from_total_dbm};
use d2du_core::wifi::{WifiPhyParams, DEFAULT_N_LIMIT};
use serde::{Deserialize, Serialize};

use crate::gains::GainModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub horizon: u64,
    pub scheme: SchemeName,
    pub power: PowerConfig,
    pub noise: NoiseConfig,
    pub learning: LearningSection,
    pub federated: FederatedSection,
    pub wifi: WifiSection,
    pub metrics: MetricsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_model: Option<GainModel>,
    pub channels: Vec<ChannelConfig>,
    pub links: Vec<LinkConfig>,
    /// Written into manifests; ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<toml::Table>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 1000,
            scheme: SchemeName::Price,
            power: PowerConfig::default(),
            noise: NoiseConfig::default(),
            learning: LearningSection::default(),
            federated: FederatedSection::default(),
            wifi: WifiSection::default(),
            metrics: MetricsConfig::default(),
            normalization: None,
            gain_model: None,
            channels: Vec::new(),
            links: Vec::new(),
            meta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    Price,
    Centralized,
}

impl SchemeName {
    pub fn scheme(self) -> Scheme {
        match self {
            Self::Price => Scheme::PriceBased,
            Self::Centralized => Scheme::Centralized,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Price => "price",
            Self::Centralized => "centralized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub total_dbm: f64,
    pub per_channel_dbm: f64,
    /// Spending budget `C`.
    pub budget: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            total_dbm: 35.0,
            per_channel_dbm: 23.0,
            budget: 1.0,
        }
    }
}

/// Noise is specified as a total power over a reference bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub total_dbm: f64,
    pub reference_bandwidth_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            total_dbm: -95.0,
            reference_bandwidth_hz: 20e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SignName {
    Literal,
    #[default]
    Equalizing,
}

impl From<SignName> for FairnessSign {
    fn from(s: SignName) -> Self {
        match s {
            SignName::Literal => FairnessSign::Literal,
            SignName::Equalizing => FairnessSign::Equalizing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSection {
    pub learning_rate: f64,
    pub price_cap: f64,
    pub fairness_step: f64,
    pub collision_penalty: f64,
    pub no_collision_reward: f64,
    pub fairness_sign: SignName,
}

impl Default for LearningSection {
    fn default() -> Self {
        Self {
            learning_rate: price_net::DEFAULT_LEARNING_RATE,
            price_cap: price_net::DEFAULT_PRICE_CAP,
            fairness_step: price_net::DEFAULT_FAIRNESS_STEP,
            collision_penalty: price_net::DEFAULT_COLLISION_PENALTY,
            no_collision_reward: price_net::DEFAULT_NO_COLLISION_REWARD,
            fairness_sign: SignName::Equalizing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationName {
    #[default]
    Squared,
    AbsoluteOffset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederatedSection {
    pub enabled: bool,
    pub period: u64,
    pub gamma: f64,
    pub epsilon: f64,
    pub min_training_slots: u64,
    pub accumulation: AccumulationName,
}

impl Default for FederatedSection {
    fn default() -> Self {
        let d = FederatedConfig::default();
        Self {
            enabled: d.enabled,
            period: d.period,
            gamma: d.gamma,
            epsilon: d.epsilon,
            min_training_slots: d.min_training_slots,
            accumulation: AccumulationName::Squared,
        }
    }
}

/// DCF parameters. Times in microseconds, PHY rate in Mbit/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyConfig {
    pub cw_min: u32,
    pub max_backoff_stage: u32,
    pub slot_time_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub header_time_us: f64,
    pub ack_time_us: f64,
    pub propagation_delay_us: f64,
    pub payload_bits: f64,
    pub phy_rate_mbps: f64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            cw_min: 32,
            max_backoff_stage: 3,
            slot_time_us: 9.0,
            sifs_us: 16.0,
            difs_us: 34.0,
            header_time_us: 52.0,
            ack_time_us: 44.0,
            propagation_delay_us: 1.0,
            payload_bits: 12_000.0,
            phy_rate_mbps: 54.0,
        }
    }
}

impl PhyConfig {
    pub fn params(&self) -> WifiPhyParams {
        WifiPhyParams {
            cw_min: self.cw_min,
            max_backoff_stage: self.max_backoff_stage,
            slot_time: self.slot_time_us * 1e-6,
            sifs: self.sifs_us * 1e-6,
            difs: self.difs_us * 1e-6,
            header_time: self.header_time_us * 1e-6,
            ack_time: self.ack_time_us * 1e-6,
            payload_bits: self.payload_bits,
            propagation_delay: self.propagation_delay_us * 1e-6,
            phy_rate: self.phy_rate_mbps * 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WifiSection {
    /// Largest contender count scanned for the throughput peak.
    pub n_limit: u32,
    /// Std of additive noise on the sensed user count.
    pub count_noise_std: f64,
    /// Share of the frame above the WiFi guarantee that still counts as collision-free.
    pub collision_tolerance: f64,
    pub phy: PhyConfig,
}

impl Default for WifiSection {
    fn default() -> Self {
        Self {
            n_limit: DEFAULT_N_LIMIT,
            count_noise_std: 0.0,
            collision_tolerance: DEFAULT_COLLISION_TOLERANCE,
            phy: PhyConfig::default(),
        }
    }
}

/// How `summary.csv` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Trailing slots averaged for the converged values.
    pub final_window: u64,
    /// Moving-average width for the convergence slot.
    pub smoothing_window: u64,
    /// Relative band around the converged ETT.
    pub settle_tolerance: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            final_window: 1000,
            smoothing_window: 50,
            settle_tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    pub max_traffic_load: f64,
    pub gain_min: f64,
    pub gain_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    pub wifi_users: u32,
    /// `[slot, users]` changes applied from `slot` on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<[u64; 2]>,
    /// Overrides `wifi.phy` for this channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phy: Option<PhyConfig>,
}

fn default_bandwidth() -> f64 {
    20e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    /// Defaults to the position in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
    /// Bits to deliver.
    pub traffic_load: f64,
    /// Linear power gain per channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    /// Transmitter-receiver distance for the `gain_model` generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
    #[serde(default = "default_join")]
    pub join_slot: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leave_slot: Option<u64>,
    #[serde(default = "default_true")]
    pub federated_init: bool,
}

fn default_join() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

/// One problem found in a config, located as precisely as possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// 1-based line in the source, when it could be found.
    pub line: Option<usize>,
    /// Dotted key path, e.g. `links.1.traffic_load`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.path.is_empty()) {
            (Some(l), false) => write!(f, "line {l}: {}: {}", self.path, self.message),
            (Some(l), true) => write!(f, "line {l}: {}", self.message),
            (None, false) => write!(f, "{}: {}", self.path, self.message),
            (None, true) => write!(f, "{}", self.message),
        }
    }
}

/// A config that could not be read, parsed or validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub diagnostics: Vec<Diagnostic>,
}

impl ConfigError {
    fn single(path: &str, message: impl Into<String>) -> Self {
        Self {
            diagnostics: vec![Diagnostic {
                line: None,
                path: path.to_string(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.diagnostics.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// Parses a config from text, applying `key=value` overrides first.
pub fn parse(source: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut table: toml::Table = source.parse().map_err(|e: toml::de::Error| ConfigError {
        diagnostics: vec![Diagnostic {
            line: e.span().map(|s| line_of(source, s.start)),
            path: String::new(),
            message: e.message().trim().to_string(),
        }],
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: Config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
        let message = e.message().trim().to_string();
        ConfigError {
            diagnostics: vec![Diagnostic {
                line: key_in_message(&message).and_then(|k| locate_key(source, &k)),
                path: String::new(),
                message,
            }],
        }
    })?;
    let diagnostics: Vec<Diagnostic> = config
        .check()
        .into_iter()
        .map(|(path, message)| Diagnostic {
            line: locate(source, &path),
            path,
            message,
        })
        .collect();
    if diagnostics.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError { diagnostics })
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Config, ConfigError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single("", format!("cannot read {}: {e}", path.display())))?;
    parse(&source, overrides)
}

/// Sets a dotted path (`a.b.0.c`) in a TOML tree. The value is parsed as a
/// TOML value and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::single(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::single(key, "empty path segment"));
    }
    let fail = |msg: &str| ConfigError::single(key, format!("override: {msg}"));
    let mut node = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if parts.len() == 1 {
        *node = value;
        return Ok(());
    }
    for (k, part) in parts.iter().enumerate().skip(1) {
        let last = k + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| fail("array index expected"))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| fail(&format!("index {idx} out of range ({len} entries)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(fail("path goes through a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

impl Config {
    /// Semantic checks beyond what the types enforce, as `(path, message)`.
    pub fn check(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut err = |path: String, msg: &str| out.push((path, msg.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;

        if self.channels.is_empty() {
            err("channels".into(), "at least one channel is required");
        }
        if !self.power.total_dbm.is_finite() {
            err("power.total_dbm".into(), "must be finite");
        }
        if !self.power.per_channel_dbm.is_finite() {
            err("power.per_channel_dbm".into(), "must be finite");
        }
        if !nonneg(self.power.budget) {
            err("power.budget".into(), "must be non-negative");
        }
        if !self.noise.total_dbm.is_finite() {
            err("noise.total_dbm".into(), "must be finite");
        }
        if !pos(self.noise.reference_bandwidth_hz) {
            err("noise.reference_bandwidth_hz".into(), "must be positive");
        }
        let l = &self.learning;
        if !nonneg(l.learning_rate) {
            err("learning.learning_rate".into(), "must be non-negative");
        }
        if !pos(l.price_cap) {
            err("learning.price_cap".into(), "must be positive");
        }
        if matches!(
            l.collision_penalty.partial_cmp(&l.no_collision_reward),
            None | Some(std::cmp::Ordering::Less)
        ) {
            err(
                "learning.collision_penalty".into(),
                "must not be below no_collision_reward",
            );
        }
        let f = &self.federated;
        if f.period == 0 {
            err("federated.period".into(), "must be at least 1");
        }
        if !pos(f.gamma) {
            err("federated.gamma".into(), "must be positive");
        }
        if !pos(f.epsilon) {
            err("federated.epsilon".into(), "must be positive");
        }
        if self.wifi.n_limit == 0 {
            err("wifi.n_limit".into(), "must be at least 1");
        }
        if !nonneg(self.wifi.count_noise_std) {
            err("wifi.count_noise_std".into(), "must be non-negative");
        }
        if !nonneg(self.wifi.collision_tolerance) {
            err("wifi.collision_tolerance".into(), "must be non-negative");
        }
        if let Err(e) = self.wifi.phy.params().validate() {
            err("wifi.phy".into(), &e.to_string());
        }
        if self.metrics.final_window == 0 {
            err("metrics.final_window".into(), "must be at least 1");
        }
        if self.metrics.smoothing_window == 0 {
            err("metrics.smoothing_window".into(), "must be at least 1");
        }
        if !pos(self.metrics.settle_tolerance) {
            err("metrics.settle_tolerance".into(), "must be positive");
        }
        if let Some(n) = &self.normalization {
            let spec = NormalizationSpec {
                max_traffic_load: n.max_traffic_load,
                gain_min: n.gain_min,
                gain_max: n.gain_max,
            };
            if let Err(e) = spec.validate() {
                err("normalization".into(), &e.to_string());
            }
        }
        if let Some(g) = &self.gain_model {
            for (field, msg) in g.check() {
                err(format!("gain_model.{field}"), msg);
            }
        }

        for (j, ch) in self.channels.iter().enumerate() {
            if !pos(ch.bandwidth_hz) {
                err(format!("channels.{j}.bandwidth_hz"), "must be positive");
            }
            if ch.schedule.iter().any(|e| e[0] == 0) || ch.schedule.windows(2).any(|w| w[1][0] <= w[0][0]) {
                err(
                    format!("channels.{j}.schedule"),
                    "slots must be positive and strictly increasing",
                );
            }
            if ch.schedule.iter().any(|e| u32::try_from(e[1]).is_err()) {
                err(format!("channels.{j}.schedule"), "user count out of range");
            }
            if let Some(p) = &ch.phy {
                if let Err(e) = p.params().validate() {
                    err(format!("channels.{j}.phy"), &e.to_string());
                }
            }
        }

        let m = self.channels.len();
        let mut ids = Vec::new();
        for (i, link) in self.links.iter().enumerate() {
            if !nonneg(link.traffic_load) {
                err(format!("links.{i}.traffic_load"), "must be non-negative");
            }
            match (&link.gains, link.distance_m) {
                (Some(_), Some(_)) => err(format!("links.{i}"), "give either gains or distance_m, not both"),
                (None, None) => err(format!("links.{i}"), "gains or distance_m is required"),
                (Some(g), None) => {
                    if g.len() != m {
                        err(
                            format!("links.{i}.gains"),
                            &format!("expected {m} values, got {}", g.len()),
                        );
                    }
                    if g.iter().any(|h| !nonneg(*h)) {
                        err(format!("links.{i}.gains"), "must be finite and non-negative");
                    }
                }
                (None, Some(d)) => {
                    if !pos(d) {
                        err(format!("links.{i}.distance_m"), "must be positive");
                    }
                    if self.gain_model.is_none() {
                        err(format!("links.{i}.distance_m"), "needs a [gain_model] section");
                    }
                }
            }
            if link.join_slot == 0 {
                err(format!("links.{i}.join_slot"), "slots are numbered from 1");
            }
            if link.leave_slot.is_some_and(|s| s <= link.join_slot) {
                err(format!("links.{i}.leave_slot"), "must be after join_slot");
            }
            let id = link.id.unwrap_or(i as u32);
            if ids.contains(&id) {
                err(format!("links.{i}.id"), &format!("duplicate link id {id}"));
            }
            ids.push(id);
        }
        out
    }

    pub fn constraints(&self) -> LinkConstraints {
        LinkConstraints {
            total_power: dbm_to_watts(self.power.total_dbm),
            per_channel_power: dbm_to_watts(self.power.per_channel_dbm),
            money: self.power.budget,
        }
    }

    pub fn noise_psd(&self) -> f64 {
        noise_psd_from_total_dbm(self.noise.total_dbm, self.noise.reference_bandwidth_hz)
    }

    /// Per-link gains, drawing from the gain model where needed.
    pub fn resolved_gains(&self) -> Vec<Vec<f64>> {
        let m = self.channels.len();
        let mut draws = self.gain_model.as_ref().map(|g| g.sampler(self.seed));
        self.links
            .iter()
            .map(|l| match (&l.gains, l.distance_m, draws.as_mut()) {
                (Some(g), _, _) => g.clone(),
                (None, Some(d), Some(s)) => s.draw(d, m),
                _ => vec![0.0; m],
            })
            .collect()
    }

    /// A copy with every generated value written out explicitly.
    pub fn resolved(&self) -> Config {
        let mut c = self.clone();
        for (link, g) in c.links.iter_mut().zip(self.resolved_gains()) {
            link.gains = Some(g);
            link.distance_m = None;
        }
        for (i, link) in c.links.iter_mut().enumerate() {
            link.id.get_or_insert(i as u32);
        }
        c.gain_model = None;
        c.meta = None;
        c
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let problems = self.check();
        if !problems.is_empty() {
            return Err(ConfigError {
                diagnostics: problems
                    .into_iter()
                    .map(|(path, message)| Diagnostic {
                        line: None,
                        path,
                        message,
                    })
                    .collect(),
            });
        }
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let mut spec = ChannelSpec::constant(c.bandwidth_hz, c.wifi_users);
                spec.phy = c.phy.unwrap_or(self.wifi.phy).params();
                spec.wifi_schedule
                    .extend(c.schedule.iter().map(|e| (e[0], e[1] as u32)));
                spec
            })
            .collect();
        let links = self
            .links
            .iter()
            .zip(self.resolved_gains())
            .enumerate()
            .map(|(i, (l, gains))| LinkSpec {
                id: l.id.unwrap_or(i as u32),
                traffic_load: l.traffic_load,
                gains,
                join_slot: l.join_slot,
                leave_slot: l.leave_slot,
                federated_init: l.federated_init,
            })
            .collect();
        let mut s = Scenario::new(channels, links, self.constraints(), self.noise_psd());
        s.seed = self.seed;
        s.horizon = self.horizon;
        s.learning = LearningConfig {
            learning_rate: self.learning.learning_rate,
            price_cap: self.learning.price_cap,
            fairness_step: self.learning.fairness_step,
            collision_penalty: self.learning.collision_penalty,
            no_collision_reward: self.learning.no_collision_reward,
            fairness_sign: self.learning.fairness_sign.into(),
        };
        s.federated = FederatedConfig {
            enabled: self.federated.enabled,
            period: self.federated.period,
            gamma: self.federated.gamma,
            epsilon: self.federated.epsilon,
            min_training_slots: self.federated.min_training_slots,
            accumulation: match self.federated.accumulation {
                AccumulationName::Squared => LossAccumulation::Squared,
                AccumulationName::AbsoluteOffset => LossAccumulation::AbsoluteOffset,
            },
        };
        s.n_limit = self.wifi.n_limit;
        s.collision_tolerance = self.wifi.collision_tolerance;
        s.wifi_count_noise_std = self.wifi.count_noise_std;
        s.normalization = self.normalization.map(|n| NormalizationSpec {
            max_traffic_load: n.max_traffic_load,
            gain_min: n.gain_min,
            gain_max: n.gain_max,
        });
        s.validate().map_err(|e| ConfigError::single("", e.to_string()))?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Best-effort line of a dotted path such as `links.2.traffic_load`.
pub fn locate(source: &str, path: &str) -> Option<usize> {
    let parts: Vec<&str> = path.split('.').collect();
    let lines: Vec<&str> = source.lines().collect();
    let mut from = 0;
    let mut k = 0;
    let mut header = String::new();
    while k < parts.len() {
        let part = parts[k];
        let next_index = parts.get(k + 1).and_then(|p| p.parse::<usize>().ok());
        if let Some(idx) = next_index {
            // Array of tables: find the idx-th `[[name]]` header.
            header = if header.is_empty() {
                part.to_string()
            } else {
                format!("{header}.{part}")
            };
            let target = format!("[[{header}]]");
            let found = lines
                .iter()
                .enumerate()
                .skip(from)
                .filter(|(_, l)| l.trim() == target)
                .nth(idx)?;
            from = found.0 + 1;
            k += 2;
            if k == parts.len() {
                return Some(found.0 + 1);
            }
            continue;
        }
        if k + 1 < parts.len() {
            header = if header.is_empty() {
                part.to_string()
            } else {
                format!("{header}.{part}")
            };
            let target = format!("[{header}]");
            if let Some((i, _)) = lines.iter().enumerate().skip(from).find(|(_, l)| l.trim() == target) {
                from = i + 1;
            }
            k += 1;
            continue;
        }
        return lines
            .iter()
            .enumerate()
            .skip(from)
            .take_while(|(i, l)| *i == from || !l.trim_start().starts_with('['))
            .find(|(_, l)| {
                let t = l.trim_start();
                t.strip_prefix(part)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map(|(i, _)| i + 1)
            .or_else(|| (from > 0).then_some(from));
    }
    None
}

/// The first line assigning `key`, anywhere in the file.
fn locate_key(source: &str, key: &str) -> Option<usize> {
    source
        .lines()
        .position(|l| {
            l.trim_start()
                .strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

/// Pulls a field name out of serde messages like "unknown field `foo`".
fn key_in_message(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}
