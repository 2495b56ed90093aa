//! Command-line harness for ccsl: configuration, panel directories,
//! experiment orchestration and result files.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use commands::Options;
pub use error::{CliError, Result};
