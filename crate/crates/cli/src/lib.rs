//! Configuration, artifact output and subcommands of the `sinhflow` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run_command, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION};
pub use config::{parse_config, ExperimentConfig, InitialData};
