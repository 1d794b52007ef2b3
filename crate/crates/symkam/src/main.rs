use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use symkam::cli::{self, OrderMode, SieveMode};
use symkam::config::ExperimentConfig;
use symkam::error::Error;

#[derive(Parser)]
#[command(name = "symkam", version, about = "Invariant-torus engine for symplectic one-step maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the conjugation loop for each configured (action, step) pair.
    RunKam(CommonArgs),
    /// Diophantine admissibility sieves.
    Sieve {
        #[command(subcommand)]
        mode: SieveCommand,
    },
    /// Drift-order studies against the reference flow.
    Order {
        #[command(subcommand)]
        mode: OrderCommand,
    },
    /// Model catalog.
    Models {
        #[command(subcommand)]
        mode: ModelsCommand,
    },
}

#[derive(Clone, clap::Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum SieveCommand {
    /// Admissible actions on a grid.
    Actions(CommonArgs),
    /// Admissible step sizes at a fixed action.
    Steps(CommonArgs),
    /// Excluded measure across a gamma list.
    GammaSweep(CommonArgs),
}

#[derive(Subcommand)]
enum OrderCommand {
    /// Symplectic Euler vs the reference flow.
    Euler(CommonArgs),
    /// Implicit midpoint vs the reference flow.
    Midpoint(CommonArgs),
    /// One scheme at paired step sizes.
    StepPairs(CommonArgs),
}

#[derive(Subcommand)]
enum ModelsCommand {
    /// Print the bundled models.
    List,
}

fn load(args: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.output.workers = workers;
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Param(_) | Error::Domain(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::RunKam(args) => load(&args).and_then(|(cfg, out)| cli::run_kam_cmd(&cfg, &out)),
        Command::Sieve { mode } => {
            let (args, mode) = match mode {
                SieveCommand::Actions(a) => (a, SieveMode::Actions),
                SieveCommand::Steps(a) => (a, SieveMode::Steps),
                SieveCommand::GammaSweep(a) => (a, SieveMode::GammaSweep),
            };
            load(&args).and_then(|(cfg, out)| cli::sieve_cmd(&cfg, mode, &out))
        }
        Command::Order { mode } => {
            let (args, mode) = match mode {
                OrderCommand::Euler(a) => (a, OrderMode::Euler),
                OrderCommand::Midpoint(a) => (a, OrderMode::Midpoint),
                OrderCommand::StepPairs(a) => (a, OrderMode::StepPairs),
            };
            load(&args).and_then(|(cfg, out)| cli::order_cmd(&cfg, mode, &out))
        }
        Command::Models { mode: ModelsCommand::List } => {
            print!("{}", cli::models_list());
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            exit_for(&err)
        }
    }
}
