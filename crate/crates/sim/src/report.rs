//! Human-readable report of a config's derived quantities.

use std::fmt::Write;

use d2du_core::wifi::{find_peak, traffic_load_from_peak};

use crate::config::{Config, ConfigError};

/// Derived quantities of a valid config, one fact per line.
pub fn validation_report(config: &Config) -> Result<String, ConfigError> {
    let scenario = config.scenario()?;
    let c = &scenario.constraints;
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        "power.total: {} dBm -> {:.5} W",
        config.power.total_dbm, c.total_power
    );
    let _ = writeln!(
        w,
        "power.per_channel: {} dBm -> {:.5} W",
        config.power.per_channel_dbm, c.per_channel_power
    );
    let _ = writeln!(w, "power.budget: {}", c.money);
    let _ = writeln!(
        w,
        "noise: {} dBm over {} Hz -> N0 = {:.4e} W/Hz",
        config.noise.total_dbm, config.noise.reference_bandwidth_hz, scenario.noise_psd
    );
    let _ = writeln!(
        w,
        "scheme: {}, seed: {}, horizon: {}",
        config.scheme.as_str(),
        scenario.seed,
        scenario.horizon
    );
    for (j, ch) in scenario.channels.iter().enumerate() {
        let peak = find_peak(&ch.phy, scenario.n_limit).map_err(|e| single(j, e))?;
        for &(from, users) in &ch.wifi_schedule {
            let load = traffic_load_from_peak(users, &ch.phy, &peak).map_err(|e| single(j, e))?;
            let status = if load.accessible {
                "accessible"
            } else {
                "INACCESSIBLE (wifi_users >= n_max)"
            };
            let _ = writeln!(
                w,
                "channel {j} from slot {from}: bandwidth {} Hz, wifi_users {users}, n_max {}, r_hat_max {:.4e} bit/s, load {:.4}, {status}",
                ch.bandwidth, peak.n_max, peak.r_hat_max, load.load
            );
        }
    }
    for l in &scenario.links {
        let gains: Vec<String> = l.gains.iter().map(|g| format!("{g:.4e}")).collect();
        let leave = l.leave_slot.map_or("never".to_string(), |s| s.to_string());
        let _ = writeln!(
            w,
            "link {}: traffic_load {} bits, gains [{}], joins {}, leaves {leave}",
            l.id,
            l.traffic_load,
            gains.join(", "),
            l.join_slot
        );
    }
    let n = scenario.normalization_spec().map_err(|e| single(0, e))?;
    let _ = writeln!(
        w,
        "normalization: max_traffic_load {}, gain range [{:.4e}, {:.4e}]",
        n.max_traffic_load, n.gain_min, n.gain_max
    );
    Ok(out)
}

fn single(channel: usize, e: d2du_core::Error) -> ConfigError {
    ConfigError {
        diagnostics: vec![crate::config::Diagnostic {
            line: None,
            path: format!("channels.{channel}"),
            message: e.to_string(),
        }],
    }
}
