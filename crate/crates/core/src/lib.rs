//! Polling-system laboratory: discrete-event simulation of cyclic and
//! longest-queue polling systems together with exact moment and transform
//! analytics for branching-type and two-queue exhaustive/1-limited systems.

pub mod branching;
pub mod config;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod model;
pub mod simulate;
pub mod stats;
pub mod twoqueue;

pub use error::{PollingError, Result};
