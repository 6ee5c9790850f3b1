//! Command-line front end: configuration, reports and the subcommands.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, Command};
pub use config::{Overrides, RunConfig};
