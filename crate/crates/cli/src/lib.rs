//! Scenario files, location datasets and experiment runs for the `mec-core` simulator.

pub mod config;
pub mod dataset;
pub mod error;
pub mod runner;

pub use config::{emit_scenario, parse_scenario, parse_scenario_str, ScenarioConfig};
pub use error::CliError;
pub use runner::{run_scenario, run_sweep, validate_scenario, SummaryDoc};
