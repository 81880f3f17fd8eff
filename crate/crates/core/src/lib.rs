//! Three-tank hydraulic benchmark: plant modeling, structural analysis,
//! Luenberger observer synthesis, adaptive-scaling Kalman filtering,
//! consensus filtering and residual-threshold fault detection.
//!
//! States are tank volumes; levels are `x / psi`. All matrices are dense
//! `nalgebra` types since the systems involved are tiny.

pub mod analysis;
pub mod askf;
pub mod consensus;
pub mod detect;
mod error;
pub mod linalg;
pub mod model;
pub mod observer;

pub use error::{Error, Result};
