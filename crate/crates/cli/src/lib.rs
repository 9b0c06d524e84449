//! Command-line driver for lmx experiments.
//!
//! `lmx --config exp.json run` evolves with the configured loop;
//! `variation`, `eda-compare` and `order-bias` run the operator analyses.
//! Exit status: 0 success, 2 config or input error, 3 engine error,
//! 4 missing engine capability, 1 failure to write results.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod engine;
pub mod error;
pub mod output;
pub mod setup;

pub use config::{ExperimentConfig, LoadedConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lmx", version, about = "Evolutionary search with language-model crossover")]
pub struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    pub no_plot: bool,
    /// Engine kind (`umda-mock`) or a JSON engine object replacing the
    /// config's engine section.
    #[arg(long, global = true)]
    pub engine_override: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured evolution loop.
    Run,
    /// Sweep the number of parents and measure offspring validity and novelty.
    Variation {
        /// One bitstring per line.
        #[arg(long)]
        parents: PathBuf,
    },
    /// Compare the engine's implied marginals with UMDA's.
    EdaCompare,
    /// Offspring score histograms for ascending, descending and random parent order.
    OrderBias,
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let Some(path) = &cli.config else {
        return Err(CliError::config("--config is required"));
    };
    let loaded = LoadedConfig::load(path)?;
    let ctx = commands::Context::new(
        loaded,
        cli.seed,
        cli.out_dir.clone(),
        cli.no_plot,
        cli.engine_override.as_deref(),
    )?;
    match &cli.command {
        Command::Run => commands::cmd_run(&ctx),
        Command::Variation { parents } => commands::cmd_variation(&ctx, parents),
        Command::EdaCompare => commands::cmd_eda_compare(&ctx),
        Command::OrderBias => commands::cmd_order_bias(&ctx),
    }
}
