//! Command-line front end: ingestion of delimited data, the analysis
//! commands and the simulation-study runner.

pub mod commands;
pub mod error;
pub mod format;
pub mod ingest;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
