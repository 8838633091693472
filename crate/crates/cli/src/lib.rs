//! Scenario runner and reference experiments for the `owcsim` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod presets;
pub mod run;
pub mod scenario;

pub use run::{evaluate, run_scenario, run_sweep, Evaluation};
pub use scenario::{ConfigError, Scenario};
