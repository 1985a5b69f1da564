//! Argument parsing and dispatch.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use crate::commands;
use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "pvcast", version, about = "Irradiance nowcasting, PV power prediction and verification")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; 0 uses every logical CPU.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Miscoverage of the central prediction interval.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelKind>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic grid record and station fleet.
    Synth,
    /// Run the selected model at every admissible issue time.
    Nowcast {
        /// Explicit issue time (RFC 3339); repeatable.
        #[arg(long = "issue-time")]
        issue_times: Vec<DateTime<Utc>>,
    },
    /// Clean the fleet and train one power model per station.
    TrainPower,
    /// Convert the selected model's SSI forecasts to station power.
    PredictPower,
    /// Score SSI and power forecasts.
    Evaluate,
    /// Daily national totals and their relative error.
    Aggregate,
    /// Print the effective configuration as TOML.
    Config,
}

impl Cli {
    /// Configuration file (or defaults) with flags and environment applied.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        if let Some(alpha) = self.alpha {
            config.alpha = alpha;
        }
        if let Some(model) = self.model {
            config.model = model;
            config.evaluate.models = vec![model];
        }
        config.apply_env();
        config.validate()?;
        Ok(config)
    }
}

/// Runs one command on a thread pool sized by `config.workers`.
pub fn execute(command: &Command, config: &RunConfig) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Synth => commands::synth::run(config).map(drop),
        Command::Nowcast { issue_times } => commands::nowcast::run(config, config.model, issue_times).map(drop),
        Command::TrainPower => commands::power::train(config).map(drop),
        Command::PredictPower => commands::power::predict(config, config.model).map(drop),
        Command::Evaluate => commands::evaluate::run(config).map(drop),
        Command::Aggregate => commands::aggregate::run(config, config.model).map(drop),
        Command::Config => {
            print!("{}", config.to_toml()?);
            Ok(())
        }
    })
}
