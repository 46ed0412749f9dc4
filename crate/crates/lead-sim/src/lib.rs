//! Experiment runner, file formats, and analysis tooling around `lead-core`.

pub mod analyze;
pub mod config;
pub mod run;
pub mod tables;

pub use config::RunConfig;
