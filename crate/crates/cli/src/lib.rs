//! Library side of the `guessd` command: configuration loading, report
//! emission and the subcommand drivers.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::exit_code;
pub use config::{load, ConfigError, Problem, RawConfig, StrategySpec};
