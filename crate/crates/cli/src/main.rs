//! `phnn`: train, compose and check port-Hamiltonian neural networks.
//!
//! Exit codes: 0 success, 2 config error, 3 validation error or missing
//! artifact, 4 numerical divergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "phnn",
    version,
    about = "Port-Hamiltonian neural network pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the ground-truth subsystems and composite; export JSON and CSV.
    Simulate(RunArgs),
    /// Generate training and test datasets.
    GenData(RunArgs),
    /// Train one submodel per configured subsystem.
    Train(RunArgs),
    /// Compose trained submodels with the known chain coupling.
    Compose(RunArgs),
    /// Fit the coupling from a few composite transitions.
    LearnCoupling(RunArgs),
    /// One-step test loss and rollout RMSE of submodels and the composite.
    Evaluate(RunArgs),
    /// Sampled composite error bound.
    BoundReport(RunArgs),
    /// Energy rate along unforced rollouts of the learned models.
    PassivityCheck(RunArgs),
}

impl Command {
    fn split(self) -> (RunArgs, fn(&Run) -> anyhow::Result<()>) {
        match self {
            Command::Simulate(a) => (a, commands::simulate_cmd),
            Command::GenData(a) => (a, commands::gen_data),
            Command::Train(a) => (a, commands::train_cmd),
            Command::Compose(a) => (a, commands::compose_cmd),
            Command::LearnCoupling(a) => (a, commands::learn_coupling),
            Command::Evaluate(a) => (a, commands::evaluate),
            Command::BoundReport(a) => (a, commands::bound_report),
            Command::PassivityCheck(a) => (a, commands::passivity_check),
        }
    }
}

fn prepare(args: RunArgs) -> Result<Run, ConfigError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    // A relative configured directory is taken relative to the config file.
    let out = match args.out {
        Some(dir) => dir,
        None if cfg.out_dir.is_relative() => args
            .config
            .parent()
            .unwrap_or(std::path::Path::new(""))
            .join(&cfg.out_dir),
        None => cfg.out_dir.clone(),
    };
    Ok(Run { cfg, out })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<phnn_core::Error>() {
            return match e {
                phnn_core::Error::Divergence { .. } | phnn_core::Error::NonFinite(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let (args, command) = Cli::parse().command.split();
    let result = prepare(args)
        .map_err(anyhow::Error::from)
        .and_then(|run| command(&run));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
