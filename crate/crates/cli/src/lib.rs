//! Experiment harness behind the `optlab` binary.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod plot;
pub mod tables;

pub use error::{CliError, Result};

/// Environment variable naming the directory experiments are written under.
pub const OUTPUT_ROOT_ENV: &str = "OPTLAB_OUTPUT_DIR";
