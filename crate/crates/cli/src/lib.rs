//! Command-line front end: configuration ingestion, run orchestration and
//! result emission for the `wavemin` library.

pub mod config;
pub mod error;
pub mod run;

pub use config::{load, LoadedConfig, Overrides, RunConfig};
pub use error::CliError;
pub use run::{run, RunOutput, Subcommand};
