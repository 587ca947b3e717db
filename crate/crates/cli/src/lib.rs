//! Scenario runner for Robin coefficient experiments: configuration,
//! closed-form verifications and artifact output.

// `!(x > 0.0)` is deliberate: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod explicit;
pub mod scenario;

pub use config::ScenarioConfig;
pub use error::CliError;
pub use scenario::{run_scenario, ScenarioOutcome};
