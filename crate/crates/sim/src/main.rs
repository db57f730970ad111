use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use d2du_sim::config::{self, SchemeName, SignName};
use d2du_sim::{report, run, RunError};

/// Exit statuses.
const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "d2du", version, about = "Price-based D2D spectrum sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV metrics, a checkpoint and a manifest.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeName>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "d2du-out")]
        out: PathBuf,
        /// Dotted-path override, e.g. `links.0.traffic_load=4e8`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum)]
        fairness_sign: Option<SignName>,
        /// Disable federated averaging.
        #[arg(long)]
        no_federated: bool,
    },
    /// Check a scenario and print derived quantities without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Validate { config, overrides } => {
            match config::load(&config, &overrides).and_then(|c| report::validation_report(&c)) {
                Ok(text) => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}: invalid config", config.display());
                    for d in &e.diagnostics {
                        eprintln!("  error: {d}");
                    }
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Run {
            config,
            scheme,
            seed,
            horizon,
            out,
            overrides,
            fairness_sign,
            no_federated,
        } => {
            let mut cfg = match config::load(&config, &overrides) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: invalid config", config.display());
                    for d in &e.diagnostics {
                        eprintln!("  error: {d}");
                    }
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(s) = fairness_sign {
                cfg.learning.fairness_sign = s;
            }
            if no_federated {
                cfg.federated.enabled = false;
            }
            match run(&cfg, &out) {
                Ok(report) => {
                    println!("{} slots written to {}", report.slots, out.display());
                    for r in &report.summary {
                        match r.link {
                            Some(id) => println!(
                                "link {id}: mean rate {:.4e} bit/s, ETT {:.4}, settled at {}",
                                r.mean_rate,
                                r.converged_ett.unwrap_or(f64::NAN),
                                r.convergence_slot.map_or("-".into(), |s| s.to_string())
                            ),
                            None => println!(
                                "system: throughput {:.4e} bit/s, ETT CV {:.4}",
                                r.mean_rate,
                                r.ett_cv.unwrap_or(f64::NAN)
                            ),
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(RunError::Config(e)) => {
                    for d in &e.diagnostics {
                        eprintln!("  error: {d}");
                    }
                    ExitCode::from(EXIT_CONFIG)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
