//! Unit conversions. Everything inside the solvers is linear watts and hertz.

/// `10^(dBm/10)` milliwatts, returned in watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    libm::pow(10.0, dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * libm::log10(watts * 1e3)
}

/// Noise power spectral density (W/Hz) from a total noise power over `bandwidth`.
pub fn noise_psd_from_total_dbm(total_dbm: f64, bandwidth: f64) -> f64 {
    dbm_to_watts(total_dbm) / bandwidth
}
