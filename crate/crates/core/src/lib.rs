//! Asset log-price models built from a three-state random walk (buy, sell, hold)
//! and its diffusion-with-retention extension.
//!
//! The crate is organised bottom-up:
//!
//! - [`market_data`]: price CSV ingestion and log-returns.
//! - [`stats`]: sample moments, quantiles and histograms.
//! - [`distributions`]: normal and location-scale Student-t densities, quantiles and samplers.
//! - [`lattice`]: exact discrete evolution of the cell-redistribution rules, plus Monte Carlo walks.
//! - [`pde`]: closed-form Gaussian solution, explicit and spectral solvers, moment laws.
//! - [`calibration`]: normal MLE and moment-matching calibration of the retention model.
//! - [`simulate`]: daily price paths under the Gaussian and Student-t proxy models.
//! - [`diagnostics`]: Q-Q tables, density overlays and the consolidated fit report.

// Validation uses `!(x > 0.0)` so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod diagnostics;
pub mod distributions;
mod error;
pub mod lattice;
pub mod market_data;
pub mod optimize;
pub mod pde;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};

/// Formats a float with the shortest representation that parses back to the
/// same bits. Used by every CSV writer in the crate.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}
