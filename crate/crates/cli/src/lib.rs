//! Config parsing and subcommands for the `p2pfl` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_bound, cmd_check_graph, cmd_run, load, Overrides};
pub use config::{parse_config, ConfigDocument, OutputFormat};
pub use error::CliError;
