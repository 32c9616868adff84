//! Command-line driver for the `lkdl` pipelines.
//!
//! Subcommands: `preprocess`, `train`, `classify`, `experiment`, `sweep`,
//! `approx-error` and `lcksvd`. Each reads a TOML experiment config (see
//! [`config`]) and writes CSV results plus a `manifest.json`.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
