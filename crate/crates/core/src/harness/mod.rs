//! Configuration, orchestration and reporting.

pub mod config;
pub mod report;
pub mod run;
pub mod verify;

pub use config::{parse_config, Budget, ConfigError, ExperimentConfig, Mode, OutputFormat};
pub use report::{emit_csv, emit_json, Report, SuiteResult};
pub use run::run;
