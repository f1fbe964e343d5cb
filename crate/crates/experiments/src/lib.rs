//! Toy and hybrid-vehicle experiments built on `poc-core`.

pub mod hev;
pub mod toy;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
