//! File formats, checkpoints and the `patchcast` command line on top of
//! `patchcast-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod tables;

pub use error::{CliError, CliResult};
