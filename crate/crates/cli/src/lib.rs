//! File formats, configuration, synthetic data and subcommands for the
//! `valagg` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod synth;

pub use error::{CliError, Result};
