//! Configuration, execution and output of the batch experiments behind the
//! `wpc` binary.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod runner;

pub use config::{load_config, parse_config, ExperimentName, ExperimentSpec};
pub use error::CliError;
