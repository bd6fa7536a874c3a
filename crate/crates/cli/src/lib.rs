//! Library side of the `rfib` command: config parsing, result bundles and
//! the subcommand implementations, kept separate from argument handling so
//! tests can drive them directly.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;

pub use bundle::{write_bundle, ResultBundle};
pub use config::{DataSource, ExperimentConfig, SweepGrid, SynthOptions};
pub use error::CliError;
