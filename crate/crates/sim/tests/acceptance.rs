//! Acceptance suite: one line per criterion, in order.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! non-zero if any criterion outside `KNOWN_FAILURES` fails.

use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use d2du_core::allocator::{kkt_residuals, solve_allocation, LinkConstraints, LinkProblem};
use d2du_core::federated::{apply_blend, average_params, blend_factor};
use d2du_core::price_net::{forward, loss_and_gradient, MlpParams, TrainingSample, PARAM_COUNT};
use d2du_core::sim::{LinkSpec, Scheme, SlotRecord, World};
use d2du_core::units::{dbm_to_watts, noise_psd_from_total_dbm};
use d2du_core::wifi::{throughput_curve, WifiPhyParams};
use d2du_sim::metrics::{
    block_means, coefficient_of_variation, converged_ett, mean, moving_average, settling_samples, stable_from,
};
use d2du_sim::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot pass with the stated constants; see the decisions log.
const KNOWN_FAILURES: &[usize] = &[4];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn config(name: &str) -> Config {
    d2du_sim::config::load(&configs().join(name), &[]).expect("example config loads")
}

fn run_world(cfg: &Config, scheme: Scheme) -> Vec<SlotRecord> {
    let mut w = World::new(cfg.scenario().unwrap(), scheme).unwrap();
    w.run(cfg.horizon).unwrap()
}

const B: f64 = 20e6;

fn n0() -> f64 {
    noise_psd_from_total_dbm(-95.0, B)
}

fn table_constraints() -> LinkConstraints {
    LinkConstraints {
        total_power: dbm_to_watts(35.0),
        per_channel_power: dbm_to_watts(23.0),
        money: 1.0,
    }
}

// ---------------------------------------------------------------- 1

fn bianchi_unimodality() -> Outcome {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut pass = true;
    for m in [3, 5] {
        let phy = WifiPhyParams {
            cw_min: 32,
            max_backoff_stage: m,
            ..WifiPhyParams::default()
        };
        let s = throughput_curve(&phy, 64).unwrap();
        // Entry k is S(k + 1); count strict local maxima, ends included.
        let maxima = (0..s.len())
            .filter(|&k| (k == 0 || s[k] > s[k - 1]) && (k + 1 == s.len() || s[k] > s[k + 1]))
            .count();
        let peak = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
        pass &= maxima == 1;
        detail.push(format!("m={m}: {maxima} maximum at n={peak}"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 1.0;
    outcome(
        "Bianchi unimodality",
        pass,
        format!("{}; {secs:.3} s", detail.join(", ")),
    )
}

// ---------------------------------------------------------------- 2

fn direct_rate(theta: &[f64], eta: &[f64], gains: &[f64], n0: f64) -> f64 {
    theta
        .iter()
        .zip(eta)
        .zip(gains)
        .filter(|((t, _), _)| **t > 0.0)
        .map(|((t, e), h)| t * B * (1.0 + e * h / (n0 * B * t)).log2())
        .sum()
}

/// Water-filling powers for fixed shares, bisecting on the power multiplier.
fn best_powers(theta: &[f64], gains: &[f64], n0: f64, c: &LinkConstraints) -> Vec<f64> {
    let usable = |t: f64, h: f64| t > 0.0 && h > 0.0;
    let at = |lambda: f64| -> Vec<f64> {
        theta
            .iter()
            .zip(gains)
            .map(|(&t, &h)| {
                if usable(t, h) {
                    (t * B * (1.0 / (lambda * LN_2) - n0 / h)).clamp(0.0, c.per_channel_power)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let capped: Vec<f64> = theta
        .iter()
        .zip(gains)
        .map(|(&t, &h)| if usable(t, h) { c.per_channel_power } else { 0.0 })
        .collect();
    if capped.iter().sum::<f64>() <= c.total_power {
        return capped;
    }
    let (mut lo, mut hi) = (1e-30_f64, 1e30_f64);
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if at(mid).iter().sum::<f64>() > c.total_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Grid over time shares plus the budget-line completion of the last channel.
fn grid_oracle(prices: &[f64], loads: &[f64], gains: &[f64], c: &LinkConstraints, steps: usize) -> f64 {
    let n0 = n0();
    let caps: Vec<f64> = loads.iter().map(|l| 1.0 - l).collect();
    let score = |theta: &[f64]| {
        let spent: f64 = theta.iter().zip(prices).map(|(t, p)| t * p).sum();
        if spent > c.money + 1e-12 {
            return f64::NEG_INFINITY;
        }
        direct_rate(theta, &best_powers(theta, gains, n0, c), gains, n0)
    };
    let fill = |spent: f64, j: usize| caps[j].min(((c.money - spent) / prices[j]).max(0.0));
    let mut best = f64::NEG_INFINITY;
    match loads.len() {
        1 => {
            for k in 0..=steps {
                best = best.max(score(&[caps[0] * k as f64 / steps as f64]));
            }
            best = best.max(score(&[fill(0.0, 0)]));
        }
        2 => {
            for a in 0..=steps {
                let t0 = caps[0] * a as f64 / steps as f64;
                for b in 0..=steps {
                    best = best.max(score(&[t0, caps[1] * b as f64 / steps as f64]));
                }
                best = best.max(score(&[t0, fill(t0 * prices[0], 1)]));
            }
        }
        _ => unreachable!(),
    }
    best
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let c = table_constraints();
    let (mut worst_gap, mut worst_kkt): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    let mut pass = true;
    for _ in 0..100 {
        let m = rng.random_range(1..=2usize);
        let loads: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.8)).collect();
        let gains: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.random_range(-11.0..-8.0))).collect();
        let prices: Vec<f64> = (0..m).map(|_| 10f64.powf(rng.random_range(-1.5..1.0))).collect();
        let bandwidths = vec![B; m];
        let p = LinkProblem {
            prices: &prices,
            loads: &loads,
            gains: &gains,
            bandwidths: &bandwidths,
            noise_psd: n0(),
            constraints: c,
        };
        let a = solve_allocation(&p).unwrap();
        let value = direct_rate(&a.theta, &a.eta, &gains, n0());
        let oracle = grid_oracle(&prices, &loads, &gains, &c, if m == 1 { 4000 } else { 400 });
        let gap = (oracle - value) / oracle;
        let kkt = kkt_residuals(&a, &p).unwrap().max_residual();
        worst_gap = worst_gap.max(gap);
        worst_kkt = worst_kkt.max(kkt);
        pass &= a.max_violation(&p) <= 1e-9 && gap <= 0.005 && kkt <= 1e-6;
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    outcome(
        "solver vs grid oracle",
        pass,
        format!("worst shortfall {worst_gap:.2e} (limit 5e-3), worst KKT {worst_kkt:.2e} (limit 1e-6); {secs:.1} s"),
    )
}

// ---------------------------------------------------------------- 3

fn gradient_check() -> Outcome {
    const W: f64 = 10.0;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-6;
    let layers = [96, 32, 1024, 32, 32, 1];
    assert_eq!(layers.iter().sum::<usize>(), PARAM_COUNT);
    let loss = |p: &MlpParams, batch: &[TrainingSample]| {
        batch
            .iter()
            .map(|s| (forward(p, &s.input, W).unwrap() - s.target).powi(2))
            .sum::<f64>()
            / batch.len() as f64
    };
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for net in 0..50u64 {
        let params = MlpParams::random(net, rng.random_range(0..1000));
        let batch: Vec<TrainingSample> = (0..1 + net % 4)
            .map(|_| TrainingSample {
                input: [
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                ],
                target: rng.random_range(0.0..W),
            })
            .collect();
        let (_, grad) = loss_and_gradient(&params, &batch, W);
        let numeric: Vec<f64> = (0..PARAM_COUNT)
            .map(|k| {
                let mut plus = params.clone();
                plus.as_mut_slice()[k] += h;
                let mut minus = params.clone();
                minus.as_mut_slice()[k] -= h;
                (loss(&plus, &batch) - loss(&minus, &batch)) / (2.0 * h)
            })
            .collect();
        let mut at = 0;
        for len in layers {
            let r = at..at + len;
            at += len;
            let diff = norm(&mut r.clone().map(|k| grad[k] - numeric[k]));
            let scale = norm(&mut r.clone().map(|k| grad[k])).max(norm(&mut r.clone().map(|k| numeric[k])));
            worst = worst.max(if scale == 0.0 { diff } else { diff / scale });
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        "MLP gradient check",
        worst <= 1e-5 && secs < 10.0,
        format!("worst per-layer relative error {worst:.2e} (limit 1e-5) over 50 nets; {secs:.1} s"),
    )
}

// ---------------------------------------------------------------- 4

fn two_link_convergence() -> Outcome {
    let mut cfg = config("two_link.toml");
    cfg.horizon = 2000;
    let records = run_world(&cfg, Scheme::PriceBased);
    let window = cfg.metrics.final_window as usize;
    let mut stable_by = 0usize;
    let mut c = [[0.0; 2]; 2];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let series: Vec<f64> = records.iter().map(|r| r.links[i].prices[j]).collect();
            let from = stable_from(&block_means(&series, 50), 0.01).map_or(usize::MAX, |k| k * 50);
            stable_by = stable_by.max(from);
            *v = mean(&series[series.len() - window..]);
        }
    }
    let stable = stable_by <= 1000;
    let ordered = c[0][0] < c[0][1] && c[1][0] > c[1][1];
    let stable_text = if stable_by == usize::MAX {
        "never".to_string()
    } else {
        format!("from slot {stable_by}")
    };
    outcome(
        "two-link price convergence",
        stable && ordered,
        format!(
            "prices stable {stable_text} (limit 1000); c11 {:.4} c12 {:.4} c21 {:.4} c22 {:.4} (need c11 < c12, c21 > c22)",
            c[0][0], c[0][1], c[1][0], c[1][1]
        ),
    )
}

// ---------------------------------------------------------------- 5, 6, 7

struct FourLink {
    cfg: Config,
    price: Vec<SlotRecord>,
    central: Vec<SlotRecord>,
}

fn four_link() -> FourLink {
    let cfg = config("four_link.toml");
    let (price, central) = std::thread::scope(|s| {
        let p = s.spawn(|| run_world(&cfg, Scheme::PriceBased));
        let c = s.spawn(|| run_world(&cfg, Scheme::Centralized));
        (p.join().unwrap(), c.join().unwrap())
    });
    FourLink { cfg, price, central }
}

fn final_etts(records: &[SlotRecord], window: usize) -> Vec<f64> {
    let tail = &records[records.len() - window..];
    (0..tail[0].links.len())
        .map(|i| {
            let rates: Vec<f64> = tail.iter().map(|r| r.links[i].realized_rate).collect();
            converged_ett(tail[0].links[i].traffic_load, &rates)
        })
        .collect()
}

fn ett_fairness(f: &FourLink) -> Outcome {
    let window = f.cfg.metrics.final_window as usize;
    let price = final_etts(&f.price, window);
    let cv = coefficient_of_variation(&price);
    let central = final_etts(&f.central, window);
    let loads: Vec<f64> = f.central[0].links.iter().map(|l| l.traffic_load).collect();
    let ordered = central
        .windows(2)
        .zip(loads.windows(2))
        .all(|(e, l)| (e[0] > e[1]) == (l[0] > l[1]) && e[0] != e[1]);
    let ratios: Vec<f64> = central.iter().zip(&loads).map(|(e, l)| e / l).collect();
    let r = mean(&ratios);
    let spread = ratios.iter().map(|x| (x / r - 1.0).abs()).fold(0.0, f64::max);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        "four-link ETT fairness",
        cv <= 0.05 && ordered && spread <= 0.05,
        format!(
            "price-based ETT [{}] CV {:.2}% (limit 5%); centralized ETT [{}] ordered {ordered}, max deviation from proportional {:.2}% (limit 5%)",
            fmt(&price),
            100.0 * cv,
            fmt(&central),
            100.0 * spread
        ),
    )
}

fn wifi_coexistence(f: &FourLink) -> Outcome {
    let window = f.cfg.metrics.final_window as usize;
    let tail = &f.price[f.price.len() - window..];
    let tol = f.cfg.wifi.collision_tolerance;
    let mut pass = true;
    let mut detail = Vec::new();
    for j in 0..tail[0].channels.len() {
        let load = tail[0].channels[j].load;
        let avg = mean(&tail.iter().map(|r| r.channels[j].wifi_fraction).collect::<Vec<_>>());
        let short = f
            .price
            .iter()
            .filter(|r| !r.channels[j].conflicted && r.channels[j].wifi_fraction < load - tol)
            .count();
        let clean = f.price.iter().filter(|r| !r.channels[j].conflicted).count();
        pass &= avg >= 0.95 * load && short == 0;
        detail.push(format!(
            "ch{j} l={load:.4} mean {avg:.4} ({:.1}% of l), {short} of {clean} clean slots below l",
            100.0 * avg / load
        ));
    }
    outcome("WiFi coexistence", pass, detail.join("; "))
}

fn throughput_gap(f: &FourLink) -> Outcome {
    let window = f.cfg.metrics.final_window as usize;
    let total = |r: &SlotRecord| r.links.iter().map(|l| l.realized_rate).sum::<f64>();
    let tail = |v: &[SlotRecord]| mean(&v[v.len() - window..].iter().map(total).collect::<Vec<_>>());
    let (p, c) = (tail(&f.price), tail(&f.central));
    let clean: Vec<(f64, f64)> = f
        .price
        .iter()
        .zip(&f.central)
        .filter(|(r, _)| r.channels.iter().all(|c| !c.conflicted))
        .map(|(r, q)| (total(r), total(q)))
        .collect();
    let above = clean.iter().filter(|(a, b)| *a > b * (1.0 + 1e-9)).count();
    outcome(
        "throughput vs centralized",
        p >= 0.85 * c && above == 0,
        format!(
            "price-based {p:.4e} vs centralized {c:.4e} bit/s = {:.1}% (limit 85%); {above} of {} collision-free slots above centralized",
            100.0 * p / c,
            clean.len()
        ),
    )
}

// ---------------------------------------------------------------- 8

struct JoinArm {
    settle: usize,
    incumbent_deviation: f64,
}

fn join_arms(seed: u64) -> [JoinArm; 2] {
    let mut cfg = config("join.toml");
    cfg.seed = seed;
    let joiner = cfg.links.pop().unwrap();
    let pre = joiner.join_slot - 1;
    let post = (cfg.horizon - pre) as usize;
    let mut base = World::new(cfg.scenario().unwrap(), Scheme::PriceBased).unwrap();
    base.run(pre).unwrap();
    let incumbents = base.links().len();
    let window = cfg.metrics.final_window as usize;
    let smooth = cfg.metrics.smoothing_window as usize;
    let tol = cfg.metrics.settle_tolerance;
    [true, false].map(|federated| {
        let mut w = base.clone();
        let spec = LinkSpec::new(incumbents as u32, joiner.traffic_load, joiner.gains.clone().unwrap());
        w.join_link(spec, federated).unwrap();
        let records = w.run(post as u64).unwrap();
        let ett = |i: usize| records.iter().map(|r| r.links[i].ett).collect::<Vec<f64>>();
        let joined = ett(incumbents);
        let target = mean(&joined[post - window..]);
        let settle = settling_samples(&joined, target, smooth, tol).unwrap_or(post);
        let incumbent_deviation = (0..incumbents)
            .map(|i| {
                let e = ett(i);
                let fin = mean(&e[post - window..]);
                moving_average(&e[..window], smooth)
                    .iter()
                    .map(|v| (v - fin).abs() / fin)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        JoinArm {
            settle,
            incumbent_deviation,
        }
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn federated_warm_start() -> Outcome {
    let arms: Vec<[JoinArm; 2]> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..10).map(|seed| s.spawn(move || join_arms(seed))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let pick = |k: usize, f: fn(&JoinArm) -> f64| median(arms.iter().map(|a| f(&a[k])).collect());
    let settle = |a: &JoinArm| a.settle as f64;
    let dev = |a: &JoinArm| a.incumbent_deviation;
    let (s_fed, s_rand) = (pick(0, settle), pick(1, settle));
    let (d_fed, d_rand) = (pick(0, dev), pick(1, dev));
    outcome(
        "federated warm start",
        s_fed < s_rand && d_fed < d_rand,
        format!(
            "median settle {s_fed} slots federated vs {s_rand} random; median incumbent max deviation {:.1}% vs {:.1}% (10 seeds)",
            100.0 * d_fed,
            100.0 * d_rand
        ),
    )
}

// ---------------------------------------------------------------- 9

/// Parameters on a coarse dyadic grid, so sums and halves are exact.
fn dyadic(seed: u64) -> MlpParams {
    let mut p = MlpParams::random(seed, 7);
    for v in p.as_mut_slice() {
        *v = (*v * 1024.0).round() / 1024.0;
    }
    p
}

fn federated_algebra() -> Outcome {
    let mut failed = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failed.push(what.to_string());
        }
    };
    let p = MlpParams::random(1, 0);
    check(average_params(&[&p, &p, &p]).unwrap() == p, "average of identical");
    let (a, b) = (dyadic(2), dyadic(3));
    let mid: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x + y) / 2.0)
        .collect();
    check(
        average_params(&[&a, &b]).unwrap().as_slice() == mid.as_slice(),
        "midpoint",
    );
    let (q, r, s) = (
        MlpParams::random(4, 0),
        MlpParams::random(5, 0),
        MlpParams::random(6, 0),
    );
    let forward_order = average_params(&[&q, &r, &s]).unwrap();
    for order in [[&r, &s, &q], [&s, &q, &r], [&q, &s, &r]] {
        check(
            average_params(&order).unwrap() == forward_order,
            "permutation invariance",
        );
    }
    check(apply_blend(&q, &r, 0.0) == q, "beta 0 keeps own");
    check(apply_blend(&q, &r, 1.0) == r, "beta 1 takes snapshot");
    for beta in [0.1, 0.2315, 0.5, 0.9] {
        check(apply_blend(&q, &q, beta) == q, "own = snapshot unchanged");
    }
    let half = blend_factor(0.4, 1.2, 0.4);
    check(half == 0.5, "beta(epsilon) = 0.5");
    let zero = blend_factor(0.0, 1.2, 0.4);
    check((zero - 1.0 / (1.0 + 1.2f64.exp())).abs() < 1e-15, "beta(0)");
    outcome(
        "federated algebra",
        failed.is_empty(),
        if failed.is_empty() {
            format!("all identities exact; beta(epsilon) = {half}, beta(0) = {zero:.4}")
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

// ---------------------------------------------------------------- 10

fn determinism() -> Outcome {
    let files = ["slots.csv", "channels.csv", "prices.csv", "summary.csv"];
    let names = ["two_link.toml", "four_link.toml", "join.toml", "fading.toml"];
    let results: Vec<Result<(), String>> = std::thread::scope(|s| {
        let handles: Vec<_> = names
            .iter()
            .map(|name| {
                s.spawn(move || {
                    let cfg = config(name);
                    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
                    for d in &dirs {
                        d2du_sim::run(&cfg, d.path()).map_err(|e| format!("{name}: {e}"))?;
                    }
                    for f in files {
                        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(f)).unwrap();
                        if read(&dirs[0]) != read(&dirs[1]) {
                            return Err(format!("{name}: {f} differs"));
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let errors: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    outcome(
        "determinism",
        errors.is_empty(),
        if errors.is_empty() {
            format!("{} scenarios, CSV bytes identical across two runs", names.len())
        } else {
            errors.join("; ")
        },
    )
}

fn main() -> ExitCode {
    // `cargo test` passes libtest flags; list mode must not run anything.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let slow = [
            s.spawn(|| {
                let f = four_link();
                [ett_fairness(&f), wifi_coexistence(&f), throughput_gap(&f)]
            }),
            s.spawn(|| [federated_warm_start(), determinism(), two_link_convergence()]),
        ];
        let fast = [bianchi_unimodality(), solver_oracle(), gradient_check()];
        let [four, rest] = slow.map(|h| h.join().unwrap());
        let [fed, det, two] = rest;
        let [a, b, c] = fast;
        let [e, f, g] = four;
        vec![a, b, c, two, e, f, g, fed, federated_algebra(), det]
    });
    let mut unexpected = 0;
    for (k, o) in outcomes.iter().enumerate() {
        let n = k + 1;
        let status = match (o.pass, KNOWN_FAILURES.contains(&n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {n:>2} {status} {}: {}", o.name, o.detail);
    }
    println!(
        "acceptance: {unexpected} unexpected failure(s) in {:.1} s",
        start.elapsed().as_secs_f64()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
