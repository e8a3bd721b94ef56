//! Command-line layer: config parsing, experiment dispatch and report files.

pub mod config;
pub mod experiments;
pub mod presets;
pub mod report;

pub use config::{parse_config, ConfigError, ConfigSource, ExperimentConfig, Scalar, Subcommand};
pub use experiments::run_experiment;
pub use report::{write_report, Check, Metric, ReportBundle, Status, Summary};

/// Exit code for a rejected config or command line.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for I/O, numeric and structural failures.
pub const EXIT_ERROR: i32 = 3;
