pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, Command, RunError, EXIT_HYPOTHESIS, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
pub use config::{parse_config, ConfigError, ExperimentConfig, ParsedConfig};
pub use report::Report;
