//! Convergence and fairness statistics over per-slot series.

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(x: &[f64]) -> f64 {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    var.sqrt() / m
}

/// Trailing moving average; entry `k` averages `x[k..k + w]`.
pub fn moving_average(x: &[f64], w: usize) -> Vec<f64> {
    assert!(w > 0);
    if x.len() < w {
        return Vec::new();
    }
    x.windows(w).map(mean).collect()
}

/// Samples needed before the `w`-wide moving average enters the band
/// `|avg - target| <= tol * |target|` and never leaves it again.
///
/// Returns the end (exclusive) of the first window of that final run, or
/// `None` when the last window is outside the band or the series is shorter
/// than `w`.
pub fn settling_samples(x: &[f64], target: f64, w: usize, tol: f64) -> Option<usize> {
    let avg = moving_average(x, w);
    let inside = |v: &f64| (v - target).abs() <= tol * target.abs();
    if !avg.last().is_some_and(inside) {
        return None;
    }
    let first_good = avg.iter().rposition(|v| !inside(v)).map_or(0, |k| k + 1);
    Some(first_good + w)
}

/// Means of consecutive non-overlapping blocks of `w` samples (a trailing
/// partial block is dropped).
pub fn block_means(x: &[f64], w: usize) -> Vec<f64> {
    assert!(w > 0);
    x.chunks_exact(w).map(mean).collect()
}

/// First block index from which every later block mean differs from its
/// predecessor by less than `tol` relative.
pub fn stable_from(blocks: &[f64], tol: f64) -> Option<usize> {
    if blocks.len() < 2 {
        return None;
    }
    let steady = |k: usize| (blocks[k + 1] - blocks[k]).abs() < tol * blocks[k].abs();
    let last_bad = (0..blocks.len() - 1).rev().find(|&k| !steady(k));
    match last_bad {
        None => Some(0),
        Some(k) if k + 2 < blocks.len() => Some(k + 1),
        Some(_) => None,
    }
}

/// `load / mean(rate)` over a window, the converged ETT.
pub fn converged_ett(traffic_load: f64, rates: &[f64]) -> f64 {
    d2du_core::sim::compute_ett(traffic_load, mean(rates))
}
