//! Predictive optimal control under imperfect forecasts.

pub mod belief;
pub mod environment;
pub mod measures;
pub mod error;
pub mod model;
pub mod predictors;
pub mod solver;

pub use error::{PocError, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
