//! Experiment harness: metrics, TOML specifications and the runners that
//! write CSV curves plus a JSON summary.

pub mod config;
pub mod metrics;
pub mod runners;

pub use config::{load_config, parse_seeds, ExperimentKind, ExperimentSpec};
pub use metrics::{armse, grid_error, loglog_slope, rmse, Norm};
pub use runners::{run_experiment, Report};
