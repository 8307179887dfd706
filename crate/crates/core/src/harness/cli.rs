use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::report::{
    run_gap_study, run_oracle, run_reinsurance, run_solve_inner, run_solve_outer, Overrides,
    RunReport,
};
use super::scenario::ScenarioFile;
use super::HarnessError;
use crate::mdp::SMode;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "SPECTRAL_MDP_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "spectral-mdp",
    version,
    about = "Spectral risk minimization for finite MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize E[g(C)] for the scenario's fixed g.
    SolveInner(RunArgs),
    /// Minimize the spectral risk of the total cost.
    SolveOuter(RunArgs),
    /// Solve a reinsurance scenario under the cost-of-capital objective.
    Reinsurance(RunArgs),
    /// Exhaustive optimum over history-dependent policies.
    Oracle(RunArgs),
    /// Lattice scan of the restricted outer problem against the oracle.
    GapStudy(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Exact reachable accumulated-cost sets.
    #[arg(long, conflicts_with = "grid")]
    exact: bool,
    /// Interpolated accumulated-cost grid.
    #[arg(long)]
    grid: bool,
}

fn destination(args: &RunArgs, command: &str) -> Option<PathBuf> {
    if let Some(p) = &args.out {
        return Some(p.clone());
    }
    let dir = std::env::var_os(OUT_DIR_ENV)?;
    let stem = args
        .scenario
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario");
    let ext = match args.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    Some(Path::new(&dir).join(format!("{stem}-{command}.{ext}")))
}

type Runner = fn(&ScenarioFile, &Overrides) -> Result<RunReport, HarnessError>;

fn execute(command: &Command) -> Result<(), HarnessError> {
    let (name, args, run): (&str, &RunArgs, Runner) = match command {
        Command::SolveInner(a) => ("solve-inner", a, run_solve_inner),
        Command::SolveOuter(a) => ("solve-outer", a, run_solve_outer),
        Command::Reinsurance(a) => ("reinsurance", a, run_reinsurance),
        Command::Oracle(a) => ("oracle", a, run_oracle),
        Command::GapStudy(a) => ("gap-study", a, run_gap_study),
    };
    let file = ScenarioFile::from_path(&args.scenario)?;
    let ov = Overrides {
        epsilon: args.epsilon,
        m: args.m,
        seed: args.seed,
        mode: match (args.exact, args.grid) {
            (true, _) => Some(SMode::Exact),
            (_, true) => Some(SMode::Grid),
            _ => None,
        },
    };
    let report = run(&file, &ov)?;
    let body = match args.format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv()?,
    };
    match destination(args, name) {
        Some(path) => std::fs::write(&path, body).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 2 on invalid input, 3 when a cap refuses the run.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
