//! Command-line driver: configuration, file formats and subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod manifest;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
