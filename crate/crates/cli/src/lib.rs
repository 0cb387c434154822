//! Command-line front end: CSV/JSON in, result files out.

pub mod args;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

pub use args::{run, Cli};
pub use error::{CliError, CliResult};
