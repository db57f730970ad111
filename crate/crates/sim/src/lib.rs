//! Scenario files, CSV metrics and the `d2du` command-line runner for
//! [`d2du_core`].

#![forbid(unsafe_code)]

pub mod config;
pub mod gains;
pub mod metrics;
pub mod output;
pub mod report;
pub mod run;

pub use config::{Config, ConfigError, Diagnostic};
pub use run::{run, RunError, RunReport};
