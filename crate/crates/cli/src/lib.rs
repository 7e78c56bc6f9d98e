//! Experiment runner for the `sff-core` simulations: TOML configs in,
//! curve CSV/JSON files and a reproducible `manifest.json` out.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{execute, Command, RunOptions};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
