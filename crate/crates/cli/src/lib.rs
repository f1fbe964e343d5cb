//! Config-driven runner, auditor and chart emitter for `poc-core` experiments.

pub mod audit;
pub mod chart;
pub mod config;
pub mod custom;
pub mod error;
pub mod run;

pub use error::CliError;
