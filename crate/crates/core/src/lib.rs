//! State-space recurrent forecasting for indoor CO₂.
//!
//! The crate is organised bottom-up: [`numerics`] and [`decomp`] are pure
//! helpers, [`cells`] and [`models`] hold the recurrent architectures and their
//! hand-written gradients, [`data`] and [`synth`] produce hourly frames,
//! [`train`] fits models, and [`eval`] scores them against naive baselines.

pub mod cells;
pub mod data;
pub mod decomp;
pub mod eval;
pub mod error;
pub mod models;
pub mod numerics;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
