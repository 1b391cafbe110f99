//! Command-line front end for `modrecon-core`: PGM images, run
//! configurations with reproducibility sidecars, and the benchmark harness.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod pgm;
pub mod selftest;
pub mod stages;

pub use cli::cli_main;
pub use error::{CliError, Result};
