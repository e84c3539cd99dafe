use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Simultaneous plant and sparse disturbance identification for building
/// thermal models.
#[derive(Debug, Parser)]
#[command(name = "spdir", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the training and validation weeks of a scenario.
    Simulate(SimulateArgs),
    /// Identify plant and disturbance from a dataset.
    Identify(IdentifyArgs),
    /// Solve along a λ grid and write both curves.
    Sweep(SweepArgs),
    /// Score an identification result on a dataset.
    Validate(ValidateArgs),
    /// Run all scenarios end to end and write a summary table.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioOverrides {
    /// Scenario config (JSON); fields left out take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// OL-PW, OL-NPW, CL-PW or CL-NPW.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Samples per dataset.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Discarded samples before each dataset.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Sampling period in hours.
    #[arg(long)]
    pub ts: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioOverrides,
    /// Output directory; defaults to the config's `output_dir`, then `.`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Solver options (JSON).
    #[arg(long)]
    pub solver: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Explicit comma-separated λ grid.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["n_points", "grid_lo", "grid_hi"])]
    pub lambdas: Option<Vec<f64>>,
    /// Points of the default grid.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Lower end of the default grid relative to λ_max.
    #[arg(long)]
    pub grid_lo: Option<f64>,
    /// Upper end of the default grid relative to λ_max.
    #[arg(long)]
    pub grid_hi: Option<f64>,
    /// Solve grid points independently and in parallel.
    #[arg(long)]
    pub cold: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Dataset CSV.
    pub dataset: PathBuf,
    #[arg(long, required_unless_present = "auto", conflicts_with = "auto")]
    pub lambda: Option<f64>,
    /// Choose λ on a sweep of the default grid.
    #[arg(long)]
    pub auto: bool,
    /// Sampling period of the dataset in hours.
    #[arg(long, default_value_t = spdir::rc_model::DEFAULT_TS_HOURS)]
    pub ts: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub dataset: PathBuf,
    #[arg(long, default_value_t = spdir::rc_model::DEFAULT_TS_HOURS)]
    pub ts: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// `result.json` written by `identify`.
    pub result: PathBuf,
    /// Dataset CSV to score on.
    pub dataset: PathBuf,
    /// Scenario config holding the true plant; enables truth-referenced metrics.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the magnitude comparison to this CSV (needs `--config`).
    #[arg(long)]
    pub bode: Option<PathBuf>,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = spdir::constraints::DEFAULT_FEAS_TOL)]
    pub feas_tol: f64,
    #[arg(short, long, default_value = "metrics.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Base scenario config; its `scenario` field is replaced per run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated subset of scenarios.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(short, long, default_value = "reproduce")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Identify(a) => commands::identify(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Reproduce(a) => commands::reproduce(&a),
    };
    match outcome {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Degraded(msg)) => {
            eprintln!("spdir: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("spdir: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn identify_needs_lambda_or_auto() {
        assert!(Cli::try_parse_from(["spdir", "identify", "d.csv"]).is_err());
        assert!(Cli::try_parse_from(["spdir", "identify", "d.csv", "--auto", "--lambda", "1"]).is_err());
        let c = Cli::try_parse_from(["spdir", "identify", "d.csv", "--lambda", "0.5"]).unwrap();
        match c.command {
            Command::Identify(a) => {
                assert_eq!(a.lambda, Some(0.5));
                assert_eq!(a.ts, 1.0 / 12.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn grid_list_parses() {
        let c = Cli::try_parse_from(["spdir", "sweep", "d.csv", "--lambdas", "0.1,1,10"]).unwrap();
        match c.command {
            Command::Sweep(a) => assert_eq!(a.grid.lambdas, Some(vec![0.1, 1.0, 10.0])),
            _ => unreachable!(),
        }
        assert!(Cli::try_parse_from(["spdir", "sweep", "d.csv", "--lambdas", "1", "--n-points", "4"]).is_err());
    }
}
