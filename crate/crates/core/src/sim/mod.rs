//! Simulation study: synthetic files, replicated runs and metrics.

pub mod experiment;
pub mod generate;
pub mod metrics;
