//! `memexplorer`: catalog inspection, single-design evaluation, transfer
//! model validation, design space exploration and frontier reporting.
//!
//! Exit status: 0 success, 1 run failure (I/O, a failing seed, oracle
//! cases outside tolerance), 2 invalid input, 3 infeasible design,
//! 4 nothing to report.

mod catalog_cmd;
mod eval;
mod explore;
mod failure;
mod inputs;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "memexplorer", version, about = "Co-design NPU memory hierarchies for LLM inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect or check a memory technology catalog.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Evaluate one design on one workload and write result.json.
    Eval(EvalArgs),
    /// Compare the analytic transfer model against the discrete-event
    /// simulator on seeded random hierarchies.
    Validate(ValidateArgs),
    /// Search the design space with one or more methods over several seeds.
    Explore(ExploreArgs),
    /// Rebuild the frontier table and plot data from an exploration run.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum CatalogCommand {
    /// Print the active catalog (bundled, or MEMEXPLORER_CATALOG).
    List,
    /// Parse and validate a catalog file.
    Validate {
        /// Catalog JSON file.
        file: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalStage {
    Prefill,
    Decode,
    Combined,
    Breakdown,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Design file (JSON).
    #[arg(long)]
    design: PathBuf,
    /// Workload file (JSON).
    #[arg(long)]
    workload: PathBuf,
    /// Stage to evaluate; defaults to the stage named in the workload trace.
    #[arg(long, value_enum)]
    stage: Option<EvalStage>,
    /// Separate decode device for `combined` (disaggregated serving).
    #[arg(long)]
    decode_design: Option<PathBuf>,
    /// KV hand-off link bandwidth for `combined`, GB/s.
    #[arg(long, default_value_t = 900.0)]
    link_gbps: f64,
    /// Reject designs whose TDP exceeds this many watts (exit 3).
    #[arg(long)]
    tdp: Option<f64>,
    /// Output file.
    #[arg(long, default_value = "result.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Number of random hierarchy/placement cases.
    #[arg(long, default_value_t = 50)]
    cases: usize,
    /// Seed for the random cases.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Largest admissible relative error.
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
    /// Simulator chunk size in bytes.
    #[arg(long, default_value_t = 1_048_576.0)]
    chunk_bytes: f64,
    /// Write the full per-case report here (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExploreArgs {
    /// Workload file (JSON).
    #[arg(long)]
    workload: PathBuf,
    /// Domain overrides (JSON); omitted fields keep their defaults.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Stage whose throughput and power are optimized.
    #[arg(long, value_enum)]
    stage: explore::StageArg,
    /// Search method; repeat or pass `all` for every method.
    #[arg(long = "method", value_enum, default_values_t = [explore::MethodArg::Ehvi])]
    methods: Vec<explore::MethodArg>,
    /// Total evaluations per run, including the initial sample.
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Size of the shared quasi-random initial sample.
    #[arg(long, default_value_t = 20)]
    n_init: usize,
    /// Number of seeds; runs use seeds first-seed .. first-seed + seeds - 1.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Power budget on TDP, watts.
    #[arg(long, default_value_t = 700.0)]
    tdp: f64,
    /// Candidates scored per acquisition step.
    #[arg(long, default_value_t = 2048)]
    pool_size: usize,
    /// Rows in frontier.csv.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory written by `explore`.
    #[arg(long)]
    run: PathBuf,
    /// Power budget on TDP, watts; defaults to the run's budget.
    #[arg(long)]
    tdp: Option<f64>,
    /// Rows in frontier.csv.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Restrict to one method.
    #[arg(long, value_enum)]
    method: Option<explore::MethodArg>,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Catalog(CatalogCommand::List) => catalog_cmd::list(),
        Command::Catalog(CatalogCommand::Validate { file }) => catalog_cmd::validate(&file),
        Command::Eval(args) => eval::run(&args),
        Command::Validate(args) => eval::validate(&args),
        Command::Explore(args) => explore::run(&args),
        Command::Report(args) => report::run(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.kind as u8)
        }
    }
}
