//! `netform`: solve, simulate, estimate and run Monte Carlo experiments from
//! a JSON config.
//!
//! Exit codes: 0 success, 1 input or config error, 2 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "netform", version, about = "Directed network formation: equilibrium, simulation, estimation")]
struct Cli {
    /// Gauss-Hermite nodes per type for the law of the fixed effects.
    #[arg(long, global = true, default_value_t = 15)]
    quadrature_nodes: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    Main,
    Leung,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the equilibrium beliefs; writes beliefs.csv and diagnostics.json.
    Equilibrium {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Draw one network; writes edges.csv and attributes.csv.
    Simulate {
        config: PathBuf,
        /// Overrides scenario.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Estimate from an edge list and an attribute file; prints JSON unless --out is given.
    Estimate {
        edges: PathBuf,
        attributes: PathBuf,
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimatorChoice::Main)]
        estimator: EstimatorChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo experiment; writes raw.csv, summary.csv, timings.csv and manifest.json.
    Mc {
        config: PathBuf,
        /// Overrides mc.parallel_workers.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides mc.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NETFORM_LOG", "warn")).init();
    let cli = Cli::parse();
    let nodes = cli.quadrature_nodes;
    let outcome = match cli.command {
        Command::Equilibrium { config, out } => commands::equilibrium(&config, &out, nodes),
        Command::Simulate { config, seed, out } => commands::simulate(&config, seed, &out, nodes),
        Command::Estimate {
            edges,
            attributes,
            config,
            estimator,
            out,
        } => commands::estimate(&edges, &attributes, &config, estimator, out.as_deref()),
        Command::Mc {
            config,
            workers,
            seed,
            out,
        } => commands::mc(&config, workers, seed, &out, nodes),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netform: {e}");
            ExitCode::from(e.code())
        }
    }
}
