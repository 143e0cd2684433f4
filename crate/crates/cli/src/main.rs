//! Batch front end: scenario loading, report emission, CSV output.
//!
//! Exit codes: 0 success (all declared checks pass), 1 input error or failed
//! check, 2 endpoint unreachable within budget, 3 internal invariant
//! violation.

mod commands;
mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use ccgeo::error::GeoError;
use clap::{Args, Parser, Subcommand};

use commands::CmdResult;
use scenario::Scenario;

#[derive(Parser)]
#[command(name = "ccgeo", version, about = "Carnot-Caratheodory geometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (key = value lines).
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; overrides the scenario's `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV / report files (reports always go to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Window-width sweep, e.g. `--eps-list 0.08,0.04,0.02`.
    #[arg(long = "eps-list", value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Bracket the CC distance between two points.
    Ccdist(RunArgs),
    /// Convert a Lipschitz horizontal curve to a piecewise integral curve.
    Smooth(RunArgs),
    /// Build a zig-zag curve and check its tangent convergence.
    Zigzag(RunArgs),
    /// Run homogeneity hypothesis checks for a diffeomorphism family.
    Verify(RunArgs),
    /// Integrate the projected field of a constant vector.
    Flow(RunArgs),
    /// Fixture management.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Subcommand)]
enum FixturesAction {
    /// Rewrite the bundled fixture curves and sample scenarios.
    Regenerate {
        /// Target directory (default `fixtures`).
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

fn exit_code_for(e: &GeoError) -> u8 {
    if commands::is_invariant_violation(e) {
        return 3;
    }
    match e {
        GeoError::UnreachableWithinBudget { .. }
        | GeoError::TooManySkippedPairs { .. }
        | GeoError::ChainStagnation { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<CmdResult, GeoError> {
    match cli.command {
        Command::Ccdist(a) => commands::cmd_ccdist(&Scenario::load(&a.scenario)?, a.seed, &a.out),
        Command::Smooth(a) => {
            commands::cmd_smooth(&Scenario::load(&a.scenario)?, a.seed, &a.out, &a.eps_list)
        }
        Command::Zigzag(a) => {
            commands::cmd_zigzag(&Scenario::load(&a.scenario)?, a.seed, &a.out, &a.eps_list)
        }
        Command::Verify(a) => commands::cmd_verify(&Scenario::load(&a.scenario)?, a.seed, &a.out),
        Command::Flow(a) => commands::cmd_flow(&Scenario::load(&a.scenario)?, a.seed, &a.out),
        Command::Fixtures {
            action: FixturesAction::Regenerate { out },
        } => commands::cmd_fixtures_regenerate(&out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(result) => {
            print!("{}", result.report);
            if result.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
