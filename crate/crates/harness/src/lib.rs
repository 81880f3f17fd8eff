//! Experiment harness for the three-tank fault detection study: configuration,
//! scenario runs, Monte Carlo comparison of estimators, and CSV/SVG output.

pub mod config;
mod error;
pub mod experiment;
pub mod output;

pub use error::{HarnessError, Result};
pub use tankfdi_core as core;
