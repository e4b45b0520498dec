mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowcritic::envs::EnvKind;
use flowcritic::rl::CriticKind;

/// Flow-matching critic training, the toy experiment, baseline benches and
/// theory checks.
#[derive(Parser, Debug)]
#[command(name = "flowcritic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy with one critic until the step budget is spent.
    Train(TrainArgs),
    /// Fit point and flow critics on the single-step toy task and map errors.
    Toy(ToyArgs),
    /// Run the numerical theory checks and print a pass/fail table.
    Checks(ChecksArgs),
    /// Train every critic kind over several seeds and compare final returns.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 64 environments, minibatches of 512, 64-unit networks.
    Desk,
    /// The full-scale hyperparameters (1024 environments, large networks).
    Full,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON file layered between the defaults and the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "FLOWCRITIC_RUN_DIR")]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Hyper {
    #[arg(long, value_parser = parse_env)]
    env: Option<EnvKind>,
    /// Environment transitions to train for.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// CoV weight temperature.
    #[arg(long)]
    alpha: Option<f64>,
    /// Velocity clip.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    m_trunc: Option<usize>,
    #[arg(long)]
    num_envs: Option<usize>,
    #[arg(long)]
    rollout_len: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatches: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Policy ratio clip.
    #[arg(long)]
    clip: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, value_parser = parse_critic)]
    critic: Option<CriticKind>,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[command(flatten)]
    common: Common,
    /// Training set size.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    m_trunc: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ChecksArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps_max: Option<f64>,
    /// Monte Carlo trials per variance check.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    hyper: Hyper,
    /// Number of seeds, counted up from --seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated critic kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_critic)]
    critics: Option<Vec<CriticKind>>,
}

fn parse_env(s: &str) -> Result<EnvKind, String> {
    s.parse().map_err(|e: flowcritic::Error| e.to_string())
}

fn parse_critic(s: &str) -> Result<CriticKind, String> {
    s.parse().map_err(|e: flowcritic::Error| e.to_string())
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_CHECK: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Toy(a) => commands::toy(a),
        Command::Checks(a) => commands::checks(a),
        Command::Bench(a) => commands::bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .any(|c| c.downcast_ref::<flowcritic::Error>().is_some_and(|f| f.is_numeric()));
            ExitCode::from(if numeric { EXIT_NUMERIC } else { EXIT_USAGE })
        }
    }
}
