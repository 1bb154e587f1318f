//! File formats, configuration and the command-line front end for
//! `panel-dml-core`.
//!
//! * [`schema`]: survey-export column mapping and the validating loader.
//! * [`assets`]: per-wave asset-class return parameters for Sharpe ratios.
//! * [`canonical`]: the typed-header intermediate dataset format.
//! * [`config`]: the run configuration file.
//! * [`commands`]: `ingest`, `estimate` and `simulate`.
//! * [`output`]: coefficient tables in CSV or JSON.

pub mod assets;
pub mod canonical;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod schema;

pub use error::{CliError, Result};
