//! Scenario files, output formats and the subcommands behind the `pear`
//! binary.

pub mod commands;
pub mod output;
pub mod scenario_file;

pub use commands::{CliError, RunOptions};
