//! File formats, parallel drivers and the `fkchain` command line on top of `fkchain-core`.

pub mod cli;
pub mod commands;
pub mod error;
pub mod format;
pub mod input;
pub mod parallel;

pub use error::{CliError, CliResult};
