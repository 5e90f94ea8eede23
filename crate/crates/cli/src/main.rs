mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shiftrisk::{EstimatorConfig, Exec, RootMode};

#[derive(Parser, Debug)]
#[command(name = "shiftrisk", version, about = "Worst-risk minimization across shifted environments")]
struct Cli {
    /// Run every stage on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw samples for every environment of an SEM spec.
    Simulate(SimulateArgs),
    /// Write moments (sample or population) as JSON.
    Moments(MomentsArgs),
    /// Estimate the worst-risk minimizer for one γ.
    Estimate(EstimateArgs),
    /// Estimate over a grid of γ values.
    Sweep(SweepArgs),
    /// Distance of sample estimates to the population minimizer along an n-ladder.
    Validate(ValidateArgs),
    /// Compare the estimator with a brute-force lattice search.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RootModeArg {
    Exact,
    Bisect,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "exact")]
    root_mode: RootModeArg,
    /// Bisections per root in bisect mode.
    #[arg(long, default_value_t = 60)]
    cn: u32,
}

/// Moments come from sample CSVs, a moments JSON, or a spec's population.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Directory with env_O.csv, env_A1.csv, ...
    #[arg(long)]
    data: Option<PathBuf>,
    /// Moments JSON as written by `moments`.
    #[arg(long)]
    moments: Option<PathBuf>,
    /// SEM spec; its population moments are used.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Observations per environment.
    #[arg(long)]
    n: usize,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MomentsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Report path (JSON); candidates go next to it as CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated, ascending.
    #[arg(long, value_delimiter = ',', required = true)]
    gamma_grid: Vec<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Sample sizes per environment, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    ladder: Vec<usize>,
    /// Replicates averaged per ladder step (seeds `seed`, `seed+1`, ...).
    #[arg(long, default_value_t = 1)]
    reps: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Lattice step of the brute-force search.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// Random directions for the shifted-risk check.
    #[arg(long, default_value_t = 10_000)]
    n_dirs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

impl SolverArgs {
    fn config(&self, gamma: f64, exec: Exec) -> EstimatorConfig {
        EstimatorConfig {
            gamma,
            root_mode: match self.root_mode {
                RootModeArg::Exact => RootMode::ExactRefine,
                RootModeArg::Bisect => RootMode::BudgetedBisection,
            },
            c_n: self.cn,
            exec,
            ..Default::default()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a, exec),
        Command::Moments(a) => commands::moments(&a),
        Command::Estimate(a) => commands::estimate(&a, exec),
        Command::Sweep(a) => commands::sweep(&a, exec),
        Command::Validate(a) => commands::validate(&a, exec),
        Command::OracleCheck(a) => commands::oracle_check(&a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
