//! Resilience checking for processes running under formally specified adversaries.

pub mod adversary;
pub mod calculus;
pub mod counter;
pub mod error;
pub mod models;
pub mod order;
pub mod resilience;
pub mod ts;
pub mod wsts;

pub use error::{Error, Result};
