//! Command-line orchestration of the pvcast chain: synthetic data, nowcasts,
//! station power models, verification and national aggregation.

pub mod app;
pub mod commands;
pub mod config;
pub mod error;
pub mod schedule;
pub mod store;
pub mod synth;

pub use app::{execute, Cli, Command};
pub use config::{ModelKind, RunConfig};
pub use error::{CliError, CliResult};
