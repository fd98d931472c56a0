//! `wrsn`: train Pareto archives of charging policies, evaluate and replay
//! them, and run comparison baselines. Every command writes a
//! `manifest.json` into its output directory and stamps each CSV row with
//! the manifest id.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use wrsn_core::baselines::{BaselineKind, EvalMode};
use wrsn_core::emo::TppeMode;

use crate::error::{CliError, EXIT_INPUT};

#[derive(Debug, Parser)]
#[command(name = "wrsn", version = manifest::VERSION, about = "Multi-objective charging policies for mobile-charger WRSNs")]
struct Cli {
    /// Worker threads for parallel training and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the evolutionary trainer and export the Pareto archive.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a seed set and write per-slot traces.
    Eval(EvalArgs),
    /// Export the charger path of one episode.
    Trajectory(TrajectoryArgs),
    /// Evaluate a comparison policy.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub algo: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the number of evolutionary generations.
    #[arg(long)]
    pub generations: Option<usize>,
    /// Overrides the evaluation combination (`text` or `algorithm`).
    #[arg(long)]
    pub mode: Option<TppeMode>,
    /// Comma-separated evaluation seeds.
    #[arg(long, value_delimiter = ',')]
    pub eval_seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the seeds recorded in the checkpoint.
    #[arg(long, value_delimiter = ',')]
    pub eval_seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// `random`, `greedy_emergency` or `scalar_ppo`.
    #[arg(long)]
    pub kind: BaselineKind,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "1000,1001,1002,1003,1004")]
    pub eval_seeds: Vec<u64>,
    /// PPO settings for `scalar_ppo` (the `[ppo]` table); the toy settings otherwise.
    #[arg(long)]
    pub algo: Option<PathBuf>,
    /// Scalarization weight `w1,w2` for `scalar_ppo`.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
    pub weight: Vec<f64>,
    /// Training iterations for `scalar_ppo`.
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Action selection of the trained network: `sampled` or `mean`.
    #[arg(long, default_value = "sampled", value_parser = parse_eval_mode)]
    pub eval_mode: EvalMode,
}

fn parse_eval_mode(s: &str) -> Result<EvalMode, String> {
    match s {
        "mean" => Ok(EvalMode::Mean),
        "sampled" => Ok(EvalMode::Sampled),
        other => Err(format!("unknown eval mode `{other}` (expected mean or sampled)")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::runtime("ThreadPool", e.to_string()))?;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Trajectory(a) => commands::trajectory(&a),
        Command::Baseline(a) => commands::baseline(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::input("BadArguments", e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code as u8)
        }
    }
}
