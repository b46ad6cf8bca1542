mod commands;
mod error;
mod input;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{estimate, frontier, pipeline, simulate, theory, Context};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hdfrontier", version, about = "Efficient frontier estimation in high dimensions")]
struct Cli {
    /// JSON configuration, or the manifest.json of an earlier run to repeat it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random component (drawn from entropy when absent).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Root of the output tree.
    #[arg(long, global = true, default_value = "runs")]
    outdir: PathBuf,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Frontier parameters and Merton constants from a mean and covariance.
    Frontier(frontier::FrontierArgs),
    /// Estimate the frontier from a returns file.
    Estimate(estimate::EstimateArgs),
    /// Monte Carlo experiments: losses, histograms, frontiers.
    Simulate(simulate::SimulateArgs),
    /// Numerical checks of the random matrix results.
    TheoryCheck(theory::TheoryArgs),
    /// Rolling-window estimation on an intraday returns panel.
    Pipeline(pipeline::PipelineArgs),
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.jobs == Some(0) {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let ctx = Context {
        config: cli.config.clone(),
        seed: cli.seed,
        jobs: cli.jobs,
        outdir: cli.outdir.clone(),
    };
    hdfrontier::parallel::with_jobs(cli.jobs, || match &cli.command {
        Command::Frontier(a) => frontier::run(a, &ctx),
        Command::Estimate(a) => estimate::run(a, &ctx),
        Command::Simulate(a) => simulate::run(a, &ctx),
        Command::TheoryCheck(a) => theory::run(a, &ctx),
        Command::Pipeline(a) => pipeline::run(a, &ctx),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
