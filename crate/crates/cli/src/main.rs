//! `stochwaste`: scenario trees, exact solves, rolling horizon and
//! stochastic measures from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochwaste_core::models::Variant;

#[derive(Debug, Parser)]
#[command(name = "stochwaste", version, about = "Stochastic inventory routing for recyclable waste collection")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Time limit in seconds (per solve, or in total for `roll`).
    #[arg(long, global = true)]
    pub time_limit: Option<f64>,
    #[arg(long, global = true, default_value = "M", value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: PathBuf,
    /// Override the travel cost C (per km).
    #[arg(long)]
    pub travel_cost: Option<f64>,
    /// Override the selling price R (per kg).
    #[arg(long)]
    pub price: Option<f64>,
    /// Override the vehicle capacity Q (kg).
    #[arg(long)]
    pub capacity: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Use Q and E_i*B instead of the big-M constant.
    #[arg(long)]
    pub tighten_big_m: bool,
    /// Leave out zero-probability nodes.
    #[arg(long)]
    pub prune_zero_prob: bool,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-6)]
    pub gap: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a scenario tree to fill-level histories.
    GenTree {
        /// CSV with `bin_id,day_index,fill_fraction`.
        #[arg(long)]
        histories: PathBuf,
        /// Branching per stage, e.g. `1x2x2x2x2x2`.
        #[arg(long)]
        structure: String,
        #[arg(long, default_value_t = 10000)]
        iterations: usize,
        /// Keep only (and order by) this instance's bins.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Solve the full multi-stage model.
    Solve {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        tree: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the model in MPS format.
        #[arg(long)]
        export_mps: Option<PathBuf>,
    },
    /// Rolling-horizon heuristic against the full model.
    Roll {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        tree: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Lookahead W; repeat for several runs.
        #[arg(short = 'W', long = "window", required = true)]
        windows: Vec<usize>,
        /// Known RP value; the full model is solved otherwise.
        #[arg(long)]
        baseline_rp: Option<f64>,
        /// CPU seconds of the known RP solve.
        #[arg(long, requires = "baseline_rp")]
        baseline_seconds: Option<f64>,
    },
    /// RP, WS, EV and the stage-wise measures.
    Measures {
        /// Single instance; use `--batch-dir` for a directory of instances.
        #[arg(long, required_unless_present = "batch_dir")]
        instance: Option<PathBuf>,
        /// Tree file; in batch mode `tree_<n>.json` in the directory wins.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Directory with `inst_<draw>_<n>.json` files.
        #[arg(long)]
        batch_dir: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// In-sample stability over several tree structures.
    Stability {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        histories: PathBuf,
        /// Comma-separated branching structures.
        #[arg(long, value_delimiter = ',', required = true)]
        structures: Vec<String>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 10000)]
        iterations: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write the model in MPS format with a name map.
    ExportMps {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long)]
        tree: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Draw sub-instances of `n` bins from a master instance.
    DrawInstance {
        /// Master instance; omit to generate a synthetic one.
        #[arg(long, required_unless_present = "synthetic")]
        master: Option<PathBuf>,
        /// Generate a synthetic master with this many bins (plus histories).
        #[arg(long)]
        synthetic: Option<usize>,
        /// Horizon of a synthetic master.
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        /// Days of synthetic history.
        #[arg(long, default_value_t = 364)]
        history_days: i64,
        #[arg(long)]
        bins: usize,
        #[arg(long, default_value_t = 1)]
        draws: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
