use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use valagg::geometry::BoundLevel;
use valagg::network::EpsilonMode;
use valagg::solver::{StepsizeSchedule, StoppingConfig};
use valagg_cli::commands::{cmd_aggregate, cmd_bounds, cmd_rank, cmd_report, cmd_synth};
use valagg_cli::config::{parse_epsilon, BoundsMode, DiscoveryName, RunConfig};
use valagg_cli::error::{EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK};
use valagg_cli::synth::SynthSpec;
use valagg_cli::Result;

#[derive(Parser)]
#[command(name = "valagg", version, about = "Multi-group value system aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print global confidence bounds derived from pairwise distances.
    Bounds {
        #[arg(long)]
        population: PathBuf,
        #[arg(long, default_value = "q2")]
        level: BoundLevel,
    },
    /// Run the aggregation dynamics and write a result file.
    Aggregate(AggregateArgs),
    /// Rank alternatives with TOPSIS for each agreed group.
    Rank {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        group: Option<usize>,
    },
    /// Generate a population with planted clusters.
    Synth(SynthArgs),
    /// Utilities and partition statistics of a result file.
    Report {
        #[arg(long)]
        result: PathBuf,
        /// Emit the machine-readable report instead of the table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    population: PathBuf,
    /// q1, q2, q3, max or file (per-agent bounds from the population file).
    #[arg(long, default_value = "max")]
    bounds: BoundsMode,
    /// full or none.
    #[arg(long, default_value = "full")]
    discovery: DiscoveryName,
    /// auto or a fixed value.
    #[arg(long, default_value = "auto", value_parser = parse_epsilon)]
    epsilon: EpsilonMode,
    #[arg(long, default_value_t = StepsizeSchedule::default().alpha0)]
    alpha0: f64,
    #[arg(long, default_value_t = StepsizeSchedule::default().decay)]
    decay: f64,
    #[arg(long, default_value_t = StoppingConfig::default().tol_x)]
    tol_x: f64,
    #[arg(long, default_value_t = StoppingConfig::default().tol_omega)]
    tol_omega: f64,
    #[arg(long, default_value_t = StoppingConfig::default().consensus_tol)]
    consensus_tol: f64,
    #[arg(long, default_value_t = StoppingConfig::default().stable_window)]
    stable_window: usize,
    #[arg(long, default_value_t = StoppingConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// Write a per-iteration CSV trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    clusters: usize,
    #[arg(long)]
    agents_per_cluster: usize,
    #[arg(long, default_value_t = 3)]
    values: usize,
    #[arg(long, default_value_t = 3)]
    alternatives: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 7.0, allow_negative_numbers = true)]
    hi: f64,
    #[arg(long)]
    separation: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Bounds { population, level } => println!("{}", cmd_bounds(&population, level)?),
        Command::Aggregate(a) => {
            let config = RunConfig {
                bounds: a.bounds,
                discovery: a.discovery,
                epsilon: a.epsilon,
                schedule: StepsizeSchedule {
                    alpha0: a.alpha0,
                    decay: a.decay,
                },
                stopping: StoppingConfig {
                    tol_x: a.tol_x,
                    tol_omega: a.tol_omega,
                    stable_window: a.stable_window,
                    max_iters: a.max_iters,
                    consensus_tol: a.consensus_tol,
                },
                seed: a.seed,
                trace: a.trace.is_some(),
            };
            let out = cmd_aggregate(&a.population, &config, &a.output, a.trace.as_deref())?;
            let status = if out.converged { "converged" } else { "not converged" };
            println!("{status} after {} iterations, {} group(s)", out.iterations, out.groups);
            if !out.converged {
                return Ok(EXIT_NOT_CONVERGED);
            }
        }
        Command::Rank { result, group } => {
            for line in cmd_rank(&result, group)? {
                println!("{line}");
            }
        }
        Command::Synth(s) => {
            let spec = SynthSpec {
                clusters: s.clusters,
                agents_per_cluster: s.agents_per_cluster,
                values: s.values,
                alternatives: s.alternatives,
                interval: [s.lo, s.hi],
                separation: s.separation,
                noise: s.noise,
                seed: s.seed,
            };
            cmd_synth(&spec, &s.output)?;
        }
        Command::Report { result, json } => print!("{}", cmd_report(&result, json)?),
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                // exit code 2 is reserved for non-converged runs
                _ => ExitCode::from(EXIT_INVALID as u8),
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
