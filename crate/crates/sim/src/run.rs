//! Executes a config and writes every output file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use d2du_core::sim::{SlotRecord, World};

use crate::config::{Config, ConfigError};
use crate::metrics::{coefficient_of_variation, converged_ett, mean, settling_samples};
use crate::output::{self, Checkpoint, SeriesWriter, SummaryRow};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(io::Error),
    /// The simulation failed mid-run; partial outputs and a `FAILED` marker
    /// were written.
    Runtime {
        slot: u64,
        message: String,
    },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "io error: {e}"),
            Self::Runtime { slot, message } => write!(f, "simulation failed in slot {slot}: {message}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

/// Per-link samples collected while running.
#[derive(Debug, Default, Clone)]
pub struct LinkSeries {
    pub traffic_load: f64,
    pub slots: Vec<u64>,
    pub rates: Vec<f64>,
    pub etts: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
pub struct Tracker {
    pub links: BTreeMap<u32, LinkSeries>,
    /// Links active in the latest slot.
    pub last_active: Vec<u32>,
}

impl Tracker {
    pub fn record(&mut self, r: &SlotRecord) {
        self.last_active.clear();
        for l in &r.links {
            let s = self.links.entry(l.id).or_default();
            s.traffic_load = l.traffic_load;
            s.slots.push(r.slot);
            s.rates.push(l.realized_rate);
            s.etts.push(l.ett);
            self.last_active.push(l.id);
        }
    }

    pub fn summary(&self, config: &Config) -> Vec<SummaryRow> {
        let scheme = config.scheme.as_str().to_string();
        let m = &config.metrics;
        let mut rows = Vec::new();
        for (&id, s) in &self.links {
            let n = s.rates.len();
            let window = n.min(m.final_window as usize);
            let mean_rate = mean(&s.rates[n - window..]);
            let ett = converged_ett(s.traffic_load, &s.rates[n - window..]);
            let settle = ett
                .is_finite()
                .then(|| settling_samples(&s.etts, ett, m.smoothing_window as usize, m.settle_tolerance))
                .flatten()
                .map(|k| s.slots[k - 1]);
            rows.push(SummaryRow {
                scheme: scheme.clone(),
                scope: "link".into(),
                link: Some(id),
                traffic_load: s.traffic_load,
                mean_rate,
                converged_ett: Some(ett),
                convergence_slot: settle,
                ett_cv: None,
            });
        }
        let active: Vec<&SummaryRow> = rows
            .iter()
            .filter(|r| r.link.is_some_and(|id| self.last_active.contains(&id)))
            .collect();
        let etts: Vec<f64> = active.iter().filter_map(|r| r.converged_ett).collect();
        let system = SummaryRow {
            scheme,
            scope: "system".into(),
            link: None,
            traffic_load: active.iter().map(|r| r.traffic_load).sum(),
            mean_rate: active.iter().map(|r| r.mean_rate).sum(),
            converged_ett: None,
            convergence_slot: if active.is_empty() {
                None
            } else {
                active
                    .iter()
                    .map(|r| r.convergence_slot)
                    .collect::<Option<Vec<u64>>>()
                    .and_then(|v| v.into_iter().max())
            },
            ett_cv: (!etts.is_empty()).then(|| coefficient_of_variation(&etts)),
        };
        rows.push(system);
        rows
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub slots: u64,
    pub summary: Vec<SummaryRow>,
}

/// The resolved config with a `[meta]` block, as written to the manifest.
pub fn manifest_text(config: &Config) -> String {
    let mut resolved = config.resolved();
    let mut meta = toml::Table::new();
    meta.insert("tool".into(), "d2du".into());
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("csv_schema".into(), i64::from(output::SCHEMA_VERSION).into());
    resolved.meta = Some(meta);
    resolved.to_toml()
}

/// Runs `config` for its horizon, writing all outputs into `out`.
pub fn run(config: &Config, out: &Path) -> Result<RunReport, RunError> {
    let scenario = config.scenario()?;
    fs::create_dir_all(out)?;
    let failed = out.join(output::FAILED_FILE);
    if failed.exists() {
        fs::remove_file(&failed)?;
    }
    fs::write(out.join(output::MANIFEST_FILE), manifest_text(config))?;

    let mut world = match World::new(scenario, config.scheme.scheme()) {
        Ok(w) => w,
        Err(e) => {
            fs::write(&failed, format!("slot 0: {e}\n"))?;
            return Err(RunError::Runtime {
                slot: 0,
                message: e.to_string(),
            });
        }
    };
    let mut series = SeriesWriter::create(out, config.scheme.as_str())?;
    let mut tracker = Tracker::default();
    let mut error = None;
    for _ in 0..config.horizon {
        match world.step() {
            Ok(r) => {
                series.write(&r)?;
                tracker.record(&r);
            }
            Err(e) => {
                error = Some((world.slot() + 1, e.to_string()));
                break;
            }
        }
    }
    series.finish()?;
    let summary = tracker.summary(config);
    output::write_summary(out, &summary)?;
    Checkpoint::of(&world).save(&out.join(output::CHECKPOINT_FILE))?;
    if let Some((slot, message)) = error {
        fs::write(&failed, format!("slot {slot}: {message}\n"))?;
        return Err(RunError::Runtime { slot, message });
    }
    Ok(RunReport {
        slots: world.slot(),
        summary,
    })
}
