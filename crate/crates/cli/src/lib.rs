//! Experiment runner for the emotion feature generators: configuration,
//! drivers for each experiment, output bookkeeping and plotting.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod plots;

pub use config::ExperimentConfig;
pub use error::{ExpError, ExpResult};
pub use manifest::{OutputSink, RunManifest};
