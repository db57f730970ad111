//! Distributed spectrum and power allocation for device-to-device links
//! sharing unlicensed channels with WiFi under a duty-cycle scheme.
//!
//! Each link prices the channels with a small online-trained network, solves
//! its own concave rate-maximisation problem against those prices, and feeds
//! fairness and collision signals back into training. A coordinator
//! periodically averages the networks. A centralized max-throughput solver
//! is provided for comparison.
//!
//! The crate is `no_std` and only needs `alloc`; IO, configuration files and
//! the command-line runner live in `d2du-sim`.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod allocator;
pub mod baseline;
mod error;
pub mod federated;
pub mod price_net;
pub mod sim;
pub mod units;
pub mod wifi;

pub use error::{Error, Result};
