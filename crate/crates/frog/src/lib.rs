//! Simulator, file formats and experiment drivers around `frog-core`.

pub mod config;
pub mod eval;
pub mod formats;
pub mod population;
pub mod report;
pub mod sim;
pub mod sweep;

pub use config::{parse_config, ConfigError, Policy, SimConfig};
pub use report::MetricsReport;
pub use sim::{run, run_with_table};
