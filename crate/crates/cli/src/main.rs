//! `pcsat`: canonize, vectorize and solve path conditions, build labeled
//! corpora, train classifier banks, run the symbolic executor and benchmark
//! the satisfiability backends.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 some verdict or
//! path was UNKNOWN.

mod bench;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

/// Successful runs either finish cleanly or report UNKNOWN results.
#[derive(Debug, PartialEq, Eq)]
pub enum Finish {
    Clean,
    Unknown,
}

#[derive(Parser, Debug)]
#[command(name = "pcsat", version, about = "Path-condition satisfiability toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Seed for every randomized step; gen-data defaults to 8, train to 1.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON object of flag values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Print a single JSON document on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the canonical form of every PC in a file (one per line).
    Canonize { file: PathBuf },
    /// Canonize and vectorize every PC in a file.
    Vectorize {
        file: PathBuf,
        #[arg(long)]
        tmax: Option<usize>,
    },
    /// Decide every PC in a file with the exact solver.
    Solve {
        file: PathBuf,
        /// Branch-and-bound node budget.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Generate, label, dedup and balance a PC corpus.
    GenData(GenDataArgs),
    /// Train a classifier bank on a corpus.
    Train(TrainArgs),
    /// Classify every PC in a file with a trained bank.
    Classify {
        #[arg(long)]
        bank: Option<PathBuf>,
        file: PathBuf,
    },
    /// Symbolically execute a program and emit one test per feasible path.
    Symexec(SymexecArgs),
    /// Time the classifier, the solver and the reuse cache on a corpus.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub programs: Option<usize>,
    /// Mutants per generated program.
    #[arg(long)]
    pub mutants: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tmax: Option<usize>,
    #[arg(long)]
    pub dmin: Option<usize>,
    #[arg(long)]
    pub dmax: Option<usize>,
    #[arg(long)]
    pub max_states: Option<usize>,
    #[arg(long)]
    pub max_label_share: Option<f64>,
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Hidden layers x neurons per layer, e.g. 5x5 or 10x10.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report k-fold accuracy per group (k >= 2).
    #[arg(long)]
    pub kfold: Option<usize>,
    #[arg(long)]
    pub tmax: Option<usize>,
    /// Share of the corpus used for training; the rest is held out.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub class_weights: bool,
    /// Write the held-out records here.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("backend").required(true).args(["bank", "solver_only", "cache"])))]
pub struct SymexecArgs {
    pub program: PathBuf,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub solver_only: bool,
    #[arg(long)]
    pub cache: bool,
    /// Load the cache from and save it to this JSONL file.
    #[arg(long, requires = "cache")]
    pub cache_file: Option<PathBuf>,
    /// Also count both kinds of misclassification (needs --bank).
    #[arg(long, requires = "bank")]
    pub verify: bool,
    #[arg(long)]
    pub max_states: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Write generated tests as JSON Lines.
    #[arg(long)]
    pub tests_out: Option<PathBuf>,
    /// Write the full run report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use at most this many records.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Untimed records run through every backend first.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(Finish::Clean) => ExitCode::SUCCESS,
        Ok(Finish::Unknown) => ExitCode::from(3),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
