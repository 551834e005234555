//! Command-line front end: JSON configuration, history replay, report output
//! and the `select`, `analyze` and `bench` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod history;
pub mod report;

pub use commands::{run, Cli};
pub use config::{parse_config, parse_config_str, RawConfig, RunConfig};
pub use error::CliError;
