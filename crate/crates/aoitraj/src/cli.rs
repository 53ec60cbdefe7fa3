//! Argument parsing for the `aoitraj` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::{self, COMMANDS};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "aoitraj",
    version,
    about = "Gaze-informed maneuver and trajectory prediction with probabilistic risk assessment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory holding data/, models/, tables/ and manifests/.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate the episode corpus and its split.
    GenData,
    /// Train the driver-intention classifier.
    TrainDi,
    /// Train the multimodal trajectory model and the learned baselines.
    TrainMt,
    /// Per-class precision, recall, F1 and time-to-maneuver on the test split.
    EvalIntent,
    /// ADE, FDE and SDE at each horizon on the test split.
    EvalTraj,
    /// Fit per-step Gaussian error models on the validation split.
    FitErrors,
    /// Run the risk assessment variants over the scripted suite.
    RiskSim,
    /// Train and evaluate the intention classifier per feature set.
    Ablate,
    /// Every command above in order.
    All,
    /// Print the effective configuration as TOML.
    Config,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainDi => "train-di",
            Command::TrainMt => "train-mt",
            Command::EvalIntent => "eval-intent",
            Command::EvalTraj => "eval-traj",
            Command::FitErrors => "fit-errors",
            Command::RiskSim => "risk-sim",
            Command::Ablate => "ablate",
            Command::All => "all",
            Command::Config => "config",
        }
    }
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let cfg = cli.run_config()?;
    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()),
        Command::All => {
            for c in COMMANDS {
                println!("== {c}");
                commands::run_command(c, cfg.clone(), &cli.out)?;
            }
        }
        c => {
            commands::run_command(c.name(), cfg, &cli.out)?;
        }
    }
    Ok(())
}
