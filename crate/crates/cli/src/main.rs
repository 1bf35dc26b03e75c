//! `amodreg`: validate scenarios, simulate decisions, run the regulator/operator
//! optimization, reweight stored results and export plot tables.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure.

mod commands;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "amodreg", version, about = "Mobility-on-demand regulation: simulation and two-level optimization")]
struct Cli {
    /// Worker threads for simulations (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a scenario and report every violated input invariant.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Simulate one decision for several seeds and write one JSON record per seed.
    Simulate(SimulateArgs),
    /// Optimize regulation with the operator responding by profit maximization.
    Optimize(OptimizeArgs),
    /// Recompute welfare of stored records under other component weights.
    Reweight(ReweightArgs),
    /// Tabulate a two-dimensional slice of a fitted surrogate from a checkpoint.
    ExportSlice(SliceArgs),
    /// Write the built-in synthetic grid city as a scenario directory.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Decision override, e.g. `--set toll_rate=0.5`; repeatable. Unset variables keep
    /// the unregulated setting and the midpoints of the operator ranges.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Number of seeds; seeds are `first_seed..first_seed + seeds`.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Result records (JSON lines); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-step time series and per-seed KPI tables.
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Maximum acquisition steps per hyperplane visit.
    #[arg(long, default_value_t = 20)]
    budget_operator: usize,
    /// Maximum regulator acquisition steps after the initial design.
    #[arg(long, default_value_t = 20)]
    budget_regulator: usize,
    /// Initial operator design size at the unregulated setting.
    #[arg(long, default_value_t = 272)]
    init_operator: usize,
    /// Initial regulator design size.
    #[arg(long, default_value_t = 272)]
    init_regulator: usize,
    #[arg(long, default_value_t = 5)]
    patience_operator: usize,
    #[arg(long, default_value_t = 5)]
    patience_regulator: usize,
    /// Leave the box corners out of the initial designs.
    #[arg(long)]
    no_corners: bool,
    /// Optimizer state file; an existing one is replayed before new evaluations.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for the incumbent, trace, observations and result records.
    #[arg(long)]
    out: PathBuf,
    /// `scenario` (the scenario's own weights), `default`, `pro-pt` or a TOML file.
    #[arg(long, default_value = "scenario")]
    weights: String,
}

#[derive(Debug, Args)]
struct ReweightArgs {
    /// Result records (JSON lines).
    #[arg(long)]
    store: PathBuf,
    /// `default`, `pro-pt` or a TOML file of component weights; repeatable, one
    /// welfare column each.
    #[arg(long, required = true)]
    weights: Vec<String>,
    /// Average over seeds per decision instead of one row per record.
    #[arg(long)]
    aggregate: bool,
    /// CSV table; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SliceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// `profit` (regulator and operator coordinates) or `welfare` (regulator only).
    #[arg(long, default_value = "welfare")]
    model: String,
    /// The two varied coordinates, e.g. `--dims 0,1`.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    dims: Vec<usize>,
    /// Fixed normalized coordinates; defaults to the incumbent.
    #[arg(long, value_delimiter = ',')]
    base: Option<Vec<f64>>,
    #[arg(long, default_value_t = 25)]
    resolution: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Nodes per side of the grid.
    #[arg(long, default_value_t = 4)]
    side: u32,
    #[arg(long, default_value_t = 500.0)]
    requests_per_hour: f64,
    #[arg(long, default_value_t = 60.0)]
    max_fleet: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Validate { scenario } => commands::validate(&scenario),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Optimize(a) => commands::optimize(&a),
        Command::Reweight(a) => commands::reweight(&a),
        Command::ExportSlice(a) => commands::export_slice(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
