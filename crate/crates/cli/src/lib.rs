//! Configuration-driven front end for the SPDC ring simulator: config
//! parsing, the simulate/sweep/fit-beam command drivers, and the run
//! manifest they emit.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_fit_beam, cmd_simulate, cmd_sweep, CliError};
pub use config::{parse_config, serialize_config, ConfigError, RunConfig, SweepKind};
pub use manifest::RunManifest;
