//! Command-line plumbing: configuration, manifest execution and reports.

pub mod config;
pub mod runner;

use std::path::Path;

pub use config::{CliOverrides, Entry, ExperimentConfig, Format, Manifest, Overrides};
pub use runner::{csv_table, execute, write_reports, EntryOutcome, ExitStatus, Plan, RunOutcome};

use crate::error::Result;

/// Plans, runs and writes reports for a config file.
pub fn run(config: &Path, cli: &CliOverrides) -> Result<(Plan, RunOutcome)> {
    let plan = Plan::build(&ExperimentConfig::load(config)?, cli)?;
    let outcome = execute(&plan);
    write_reports(&plan, &outcome)?;
    Ok((plan, outcome))
}

/// Resolved plan for a config file, without computing.
pub fn describe(config: &Path, cli: &CliOverrides) -> Result<String> {
    Ok(Plan::build(&ExperimentConfig::load(config)?, cli)?.describe())
}
