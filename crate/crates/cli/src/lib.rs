//! The `cmmd` command line: synthetic data, preprocessing, training,
//! prediction, evaluation, hyperparameter sweeps and the market
//! uncertainty index, each driven by one JSON config file.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

use std::ffi::OsString;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "cmmd", version, about = "Bankruptcy prediction with a conditional multimodal model")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth,
    /// Build a dataset from fundamentals, market, bankruptcy and MDA files.
    Prep,
    /// Train CMMD or a baseline.
    Train,
    /// Score rows with a trained model.
    Predict,
    /// Compute AUC, H-measure and KS, optionally over repeated seeds.
    Evaluate,
    /// Grid search on a validation window.
    Sweep,
    /// Market uncertainty index from CMMD latent variances.
    Mui,
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = RunConfig::load(
        cli.config.as_deref(),
        &Overrides {
            seed: cli.seed,
            out: cli.out.clone(),
        },
    )?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Prep => commands::cmd_prep(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Predict => commands::cmd_predict(&cfg),
        Command::Evaluate => commands::cmd_evaluate(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
        Command::Mui => commands::cmd_mui(&cfg),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 ok, 2 validation, 3 data, 4 internal.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match catch_unwind(AssertUnwindSafe(|| dispatch(&cli))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("cmmd: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("cmmd: internal error: unexpected panic");
            4
        }
    }
}
