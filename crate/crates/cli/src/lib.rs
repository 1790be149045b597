//! Configuration-driven front end for `cdt-router`: one JSON run config in,
//! figure-ready CSV and JSON artifacts out.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, ConfigError, Diagnostic, Kind, RunConfig};
pub use run::{apply_overrides, run, Manifest, Overrides, RunError, RunOutcome};
