//! Experiment driver for the `srlfi` library: configuration loading,
//! generator checkpoints, experiment runs, and report aggregation.

pub mod checkpoint;
pub mod config;
pub mod report;
pub mod runner;
