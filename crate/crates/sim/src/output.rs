//! Output files of a run: CSV metrics and the parameter checkpoint.
//!
//! CSV headers are part of the interface; bump [`SCHEMA_VERSION`] when a
//! column changes. Booleans are written as 0/1.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use d2du_core::price_net::{MlpParams, PARAM_COUNT};
use d2du_core::sim::{SlotRecord, World};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

pub const SLOTS_FILE: &str = "slots.csv";
pub const CHANNELS_FILE: &str = "channels.csv";
pub const PRICES_FILE: &str = "prices.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_FILE: &str = "federated.ckpt";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FAILED_FILE: &str = "FAILED";

#[derive(Debug, Serialize)]
struct SlotRow<'a> {
    scheme: &'a str,
    slot: u64,
    link: u32,
    channel: usize,
    price: Option<f64>,
    theta: f64,
    eta: f64,
    rate: f64,
    ett: f64,
    collision: u8,
}

#[derive(Debug, Serialize)]
struct ChannelRow<'a> {
    scheme: &'a str,
    slot: u64,
    channel: usize,
    wifi_users: u32,
    accessible: u8,
    guarantee: f64,
    demand: f64,
    scale: f64,
    wifi_fraction: f64,
    guarantee_met: u8,
    collision: u8,
}

#[derive(Debug, Serialize)]
struct PriceRow {
    slot: u64,
    link: u32,
    channel: usize,
    price: f64,
}

/// One line of `summary.csv`: a link, or the whole system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: String,
    /// `link` or `system`.
    pub scope: String,
    pub link: Option<u32>,
    pub traffic_load: f64,
    /// Mean realized rate over the final window (total for `system`).
    pub mean_rate: f64,
    pub converged_ett: Option<f64>,
    /// Slot at which the smoothed ETT settled near its converged value.
    pub convergence_slot: Option<u64>,
    /// Spread of converged ETTs (`system` only).
    pub ett_cv: Option<f64>,
}

/// Streams per-slot rows to the three time-series files.
pub struct SeriesWriter {
    scheme: &'static str,
    slots: csv::Writer<BufWriter<File>>,
    channels: csv::Writer<BufWriter<File>>,
    prices: csv::Writer<BufWriter<File>>,
}

fn writer(path: &Path, header: &[&str]) -> io::Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    Ok(w)
}

pub const SLOTS_HEADER: &[&str] = &[
    "scheme",
    "slot",
    "link",
    "channel",
    "price",
    "theta",
    "eta",
    "rate",
    "ett",
    "collision",
];
pub const CHANNELS_HEADER: &[&str] = &[
    "scheme",
    "slot",
    "channel",
    "wifi_users",
    "accessible",
    "guarantee",
    "demand",
    "scale",
    "wifi_fraction",
    "guarantee_met",
    "collision",
];
pub const PRICES_HEADER: &[&str] = &["slot", "link", "channel", "price"];
pub const SUMMARY_HEADER: &[&str] = &[
    "scheme",
    "scope",
    "link",
    "traffic_load",
    "mean_rate",
    "converged_ett",
    "convergence_slot",
    "ett_cv",
];

impl SeriesWriter {
    pub fn create(dir: &Path, scheme: &'static str) -> io::Result<Self> {
        Ok(Self {
            scheme,
            slots: writer(&dir.join(SLOTS_FILE), SLOTS_HEADER)?,
            channels: writer(&dir.join(CHANNELS_FILE), CHANNELS_HEADER)?,
            prices: writer(&dir.join(PRICES_FILE), PRICES_HEADER)?,
        })
    }

    pub fn write(&mut self, r: &SlotRecord) -> io::Result<()> {
        for l in &r.links {
            for j in 0..l.allocation.theta.len() {
                let price = l.prices.get(j).copied();
                self.slots.serialize(SlotRow {
                    scheme: self.scheme,
                    slot: r.slot,
                    link: l.id,
                    channel: j,
                    price,
                    theta: l.allocation.theta[j],
                    eta: l.allocation.eta[j],
                    rate: l.channel_rates[j],
                    ett: l.ett,
                    collision: l.collided[j].into(),
                })?;
                if let Some(price) = price {
                    self.prices.serialize(PriceRow {
                        slot: r.slot,
                        link: l.id,
                        channel: j,
                        price,
                    })?;
                }
            }
        }
        for (j, c) in r.channels.iter().enumerate() {
            self.channels.serialize(ChannelRow {
                scheme: self.scheme,
                slot: r.slot,
                channel: j,
                wifi_users: c.wifi_users,
                accessible: c.accessible.into(),
                guarantee: c.load,
                demand: c.demand,
                scale: c.scale,
                wifi_fraction: c.wifi_fraction,
                guarantee_met: (c.wifi_fraction >= c.load).into(),
                collision: c.conflicted.into(),
            })?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.slots.flush()?;
        self.channels.flush()?;
        self.prices.flush()
    }
}

pub fn write_summary(dir: &Path, rows: &[SummaryRow]) -> io::Result<()> {
    let mut w = writer(&dir.join(SUMMARY_FILE), SUMMARY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

const MAGIC: &[u8; 8] = b"D2DUCKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Coordinator snapshot and every active link's network after a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub slot: u64,
    pub rounds: u64,
    pub snapshot: Option<MlpParams>,
    pub links: Vec<LinkCheckpoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkCheckpoint {
    pub id: u32,
    pub trained_slots: u64,
    pub q_sum: f64,
    pub params: MlpParams,
}

impl Checkpoint {
    pub fn of(world: &World) -> Self {
        Self {
            slot: world.slot(),
            rounds: world.coordinator().rounds(),
            snapshot: world.coordinator().snapshot().cloned(),
            links: world
                .links()
                .iter()
                .map(|l| LinkCheckpoint {
                    id: l.spec.id,
                    trained_slots: l.trained_slots,
                    q_sum: l.q_sum,
                    params: l.params.clone(),
                })
                .collect(),
        }
    }

    /// Little-endian binary layout: magic, version, slot, rounds, optional
    /// snapshot, then `(id, trained_slots, q_sum, params)` per link.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(PARAM_COUNT as u32).to_le_bytes())?;
        w.write_all(&self.slot.to_le_bytes())?;
        w.write_all(&self.rounds.to_le_bytes())?;
        w.write_all(&[u8::from(self.snapshot.is_some())])?;
        if let Some(s) = &self.snapshot {
            write_params(w, s)?;
        }
        w.write_all(&(self.links.len() as u32).to_le_bytes())?;
        for l in &self.links {
            w.write_all(&l.id.to_le_bytes())?;
            w.write_all(&l.trained_slots.to_le_bytes())?;
            w.write_all(&l.q_sum.to_le_bytes())?;
            write_params(w, &l.params)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint"));
        }
        if read_u32(r)? != CHECKPOINT_VERSION {
            return Err(bad("unsupported checkpoint version"));
        }
        if read_u32(r)? as usize != PARAM_COUNT {
            return Err(bad("parameter count mismatch"));
        }
        let slot = read_u64(r)?;
        let rounds = read_u64(r)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let snapshot = match flag[0] {
            0 => None,
            1 => Some(read_params(r)?),
            _ => return Err(bad("bad snapshot flag")),
        };
        let n = read_u32(r)?;
        let links = (0..n)
            .map(|_| {
                Ok(LinkCheckpoint {
                    id: read_u32(r)?,
                    trained_slots: read_u64(r)?,
                    q_sum: f64::from_bits(read_u64(r)?),
                    params: read_params(r)?,
                })
            })
            .collect::<io::Result<_>>()?;
        Ok(Self {
            slot,
            rounds,
            snapshot,
            links,
        })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Self::read_from(&mut io::BufReader::new(File::open(path)?))
    }
}

fn write_params(w: &mut impl Write, p: &MlpParams) -> io::Result<()> {
    for v in p.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_params(r: &mut impl Read) -> io::Result<MlpParams> {
    let flat = (0..PARAM_COUNT)
        .map(|_| read_u64(r).map(f64::from_bits))
        .collect::<io::Result<Vec<_>>>()?;
    MlpParams::from_flat(flat).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}
