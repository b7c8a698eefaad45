//! Device-free localization from the received signal strength of a static
//! wireless network.
//!
//! The pipeline runs empty-room [`calibration`], builds an ellipse weight
//! model ([`spatial_model`]), turns per-frame RSS changes into
//! measurements ([`measurement_model`]), reconstructs an attenuation
//! image ([`reconstruction`]) and localizes and tracks its peak
//! ([`tracking`]). [`harness`] wires the four estimator variants
//! together, [`simulator`] produces synthetic traces with ground truth, and
//! [`ingest`] reads and writes every file format.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ingest;
pub mod measurement_model;
pub mod reconstruction;
pub mod simulator;
pub mod spatial_model;
pub mod tracking;

pub use error::{Error, Result};
pub use faer;
pub use nalgebra;
