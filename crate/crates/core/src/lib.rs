//! Session-based next-item recommendation with a scalarized multi-objective
//! Q-learning regularizer on top of a GRU encoder.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod rewards;
pub mod smorl;

pub use error::{Result, SmorlError};
