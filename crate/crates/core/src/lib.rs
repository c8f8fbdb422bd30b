//! Time-variant causal survival estimation.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod ndgrad;
pub mod par;
pub mod simgen;
pub mod tcsnet;

pub use error::{Result, TcsError};
