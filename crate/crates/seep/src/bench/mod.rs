//! Benchmark orchestration: run configuration, the training pipeline, error
//! metrics, and the machine-readable run report.

pub mod config;
pub mod metrics;
pub mod report;
pub mod run;
