use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contagion_cli::{analyze, run, AnalyzeOptions, CliError, Command, RunOptions};

#[derive(Parser)]
#[command(name = "contagion", version, about = "Default contagion in large credit portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a JSON sidecar from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; the resolved config is written to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Overrides sim.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides sim.trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: $CONTAGION_THREADS, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte Carlo of the finite pool.
    SimulateFinite(Common),
    /// Monte Carlo of the large-pool limit through the moment cascade.
    SimulateLimit(Common),
    /// Density PDE without systematic risk, with the closed form where it exists.
    SolveDeterministic(Common),
    /// Explicit finite-difference SPDE along Monte Carlo risk paths.
    SolveSpdeFd(Common),
    /// Picard fixed point of the contagion rate along Monte Carlo risk paths.
    SolveFixedPoint(Common),
    /// Two solvers on shared seeds, per-horizon KS and VaR differences.
    Compare(Common),
    /// Summary statistics of sample CSV files.
    Analyze {
        /// Sample CSV (repeatable); KS is measured against the first.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// VaR level (repeatable).
        #[arg(long = "level", default_values_t = [0.95, 0.99])]
        levels: Vec<f64>,
        /// Bootstrap resamples for VaR standard errors.
        #[arg(long, default_value_t = 200)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        bins: Option<usize>,
        /// Histogram CSV, requires --bins.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

fn dispatch(sub: Sub) -> Result<(), CliError> {
    let (command, c) = match sub {
        Sub::SimulateFinite(c) => (Command::SimulateFinite, c),
        Sub::SimulateLimit(c) => (Command::SimulateLimit, c),
        Sub::SolveDeterministic(c) => (Command::SolveDeterministic, c),
        Sub::SolveSpdeFd(c) => (Command::SolveSpdeFd, c),
        Sub::SolveFixedPoint(c) => (Command::SolveFixedPoint, c),
        Sub::Compare(c) => (Command::Compare, c),
        Sub::Analyze {
            inputs,
            out,
            levels,
            resamples,
            seed,
            bins,
            histogram,
        } => {
            return analyze(&AnalyzeOptions {
                inputs,
                out,
                levels,
                resamples,
                seed,
                bins,
                histogram,
            });
        }
    };
    run(
        command,
        &RunOptions {
            config: c.config,
            out: c.out,
            seed: c.seed,
            trials: c.trials,
            threads: c.threads,
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
