use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use d2du_sim::output::Checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_d2du"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn golden_csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_link.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--horizon",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        first_line(&dir.path().join("slots.csv")),
        "scheme,slot,link,channel,price,theta,eta,rate,ett,collision"
    );
    assert_eq!(
        first_line(&dir.path().join("channels.csv")),
        "scheme,slot,channel,wifi_users,accessible,guarantee,demand,scale,wifi_fraction,guarantee_met,collision"
    );
    assert_eq!(first_line(&dir.path().join("prices.csv")), "slot,link,channel,price");
    assert_eq!(
        first_line(&dir.path().join("summary.csv")),
        "scheme,scope,link,traffic_load,mean_rate,converged_ett,convergence_slot,ett_cv"
    );
    // 3 slots x 2 links x 2 channels.
    let rows = fs::read_to_string(dir.path().join("slots.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 12);
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("csv_schema = 1"));
}

#[test]
fn zero_horizon_gives_empty_series_and_valid_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_link.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--horizon",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let slots = fs::read_to_string(dir.path().join("slots.csv")).unwrap();
    assert_eq!(slots.lines().count(), 1);
    let manifest = dir.path().join("manifest.toml");
    let o = run(&["validate", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = Checkpoint::load(&dir.path().join("federated.ckpt")).unwrap();
    assert_eq!(ckpt.slot, 0);
    assert!(ckpt.snapshot.is_none());
}

#[test]
fn manifest_rerun_is_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("fading.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--horizon",
        "250",
        "--seed",
        "5",
        "--override",
        "learning.learning_rate=0.01",
        "--out",
        a.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = a.path().join("manifest.toml");
    let o = run(&["run", manifest.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "slots.csv",
        "channels.csv",
        "prices.csv",
        "summary.csv",
        "federated.ckpt",
        "manifest.toml",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let ckpt = Checkpoint::load(&a.path().join("federated.ckpt")).unwrap();
    assert_eq!((ckpt.slot, ckpt.rounds, ckpt.links.len()), (250, 2, 3));
}

#[test]
fn centralized_scheme_has_no_prices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("four_link.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--scheme",
        "centralized",
        "--horizon",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let slots = fs::read_to_string(dir.path().join("slots.csv")).unwrap();
    let row = slots.lines().nth(1).unwrap();
    assert!(row.starts_with("centralized,1,0,0,,"), "{row}");
    let prices = fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    assert_eq!(prices.lines().count(), 1);
}

#[test]
fn validate_reports_conversions_and_inaccessible_channels() {
    let cfg = configs().join("two_link.toml");
    let o = run(&[
        "validate",
        cfg.to_str().unwrap(),
        "--override",
        "channels.1.wifi_users=4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("35 dBm -> 3.16228 W"), "{out}");
    assert!(out.contains("23 dBm -> 0.19953 W"), "{out}");
    assert!(out.contains("channel 0 from slot 0: bandwidth 20000000 Hz, wifi_users 1, n_max 4"));
    assert!(
        out.contains("wifi_users 4, n_max 4") && out.contains("INACCESSIBLE"),
        "{out}"
    );
}

#[test]
fn malformed_and_invalid_configs_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "horizon = 10\n[[channels]\nwifi_users = 1\n").unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    fs::write(
        &bad,
        "[[channels]]\nwifi_users = 1\n\n[[links]]\ntraffic_load = -3\ngains = [1e-9, 2e-9]\n",
    )
    .unwrap();
    let o = run(&[
        "run",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("line 5: links.0.traffic_load: must be non-negative"),
        "{err}"
    );
    assert!(err.contains("line 6: links.0.gains: expected 1 values, got 2"), "{err}");
    assert!(!dir.path().join("o").exists());

    let o = run(&["run", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["run"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numeric_failure_exits_with_2_and_leaves_marker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_link.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--override",
        "links.0.gains=[1e308, 1e-9]",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let marker = fs::read_to_string(dir.path().join("FAILED")).unwrap();
    assert!(marker.starts_with("slot 1:"), "{marker}");
    assert!(dir.path().join("slots.csv").exists());
    assert!(dir.path().join("manifest.toml").exists());

    // A later successful run in the same directory clears the marker.
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--horizon",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(!dir.path().join("FAILED").exists());
}

#[test]
fn cli_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_link.toml");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--horizon",
        "1",
        "--seed",
        "9",
        "--fairness-sign",
        "literal",
        "--no-federated",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 9"));
    assert!(manifest.contains("horizon = 1\n"));
    assert!(manifest.contains("fairness_sign = \"literal\""));
    assert!(manifest.contains("enabled = false"));
}

#[test]
fn example_configs_validate() {
    for f in ["two_link.toml", "four_link.toml", "join.toml", "fading.toml"] {
        let o = run(&["validate", configs().join(f).to_str().unwrap()]);
        assert!(o.status.success(), "{f}: {}", stderr(&o));
    }
}
