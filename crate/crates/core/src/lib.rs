//! Photovoltaic array fault diagnosis from I-V curves.
//!
//! Single-diode module simulation, series-parallel array composition with
//! fault injection, Gramian angular difference field features and an
//! attention CNN classifier, plus the orchestration used by the `pvgadf`
//! binary.

pub mod array;
pub mod correction;
pub mod curve;
pub mod env;
pub mod error;
pub mod fault;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod solve;

pub use error::{Error, Result};
