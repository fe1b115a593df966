//! Command-line front end: initialization, verification, fair and baseline
//! training, evaluation, timing comparison, run-log aggregation, and
//! deterministic benchmark generation.

mod manifest;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairgrad::init::{DEFAULT_PHI, DEFAULT_P_INIT};
use fairgrad::train::{DEFAULT_BATCH, DEFAULT_DELTA, DEFAULT_EPOCHS, DEFAULT_ETA};

/// Hidden-layer widths of every network this tool builds.
pub const HIDDEN_LAYERS: [usize; 5] = [64, 32, 16, 8, 4];
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Parser)]
#[command(
    name = "fairgrad",
    version,
    about = "Trains small feed-forward classifiers that are individually fair by construction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV data file.
    #[arg(long)]
    data: PathBuf,
    /// Column schema (kinds, sensitive attribute, label).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct InitArgs {
    /// Initialization scheme.
    #[arg(long, value_enum, default_value_t = InitSchemeArg::Bernoulli)]
    init: InitSchemeArg,
    /// Bernoulli weight log-magnitude; weights are drawn as +-e^phi.
    #[arg(long, default_value_t = DEFAULT_PHI, allow_negative_numbers = true)]
    phi: f64,
    /// Probability of the positive sign in the Bernoulli draw.
    #[arg(long = "p-init", default_value_t = DEFAULT_P_INIT)]
    p_init: f64,
}

#[derive(Args)]
struct BudgetArgs {
    /// Verifier partition budget.
    #[arg(long = "budget-partitions", default_value_t = 100_000)]
    budget_partitions: usize,
    /// Verifier wall-clock budget in seconds.
    #[arg(long = "budget-seconds", default_value_t = 60.0)]
    budget_seconds: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    /// Learning rate.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    lr: f64,
    /// Mini-batch size.
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    batch: usize,
    /// Sensitive-column treatment during fair training.
    #[arg(long, value_enum, default_value_t = ModeArg::Expectation)]
    mode: ModeArg,
    /// Randomized-response draws per sample and step in stochastic mode.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: usize,
    /// When the privacy budget is re-solved.
    #[arg(long = "gamma-schedule", value_enum, default_value_t = ScheduleArg::Epoch)]
    gamma_schedule: ScheduleArg,
    /// Disable the tie-projection safeguard; tie-breaking updates are then
    /// rolled back, and expectation mode halts on an infeasible budget.
    #[arg(long = "no-projection", default_value_t = false)]
    no_projection: bool,
    /// Held-out fraction of rows used as the test split.
    #[arg(long = "test-fraction", default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitSchemeArg {
    /// Zero weights and biases.
    Zero,
    /// Random sign weights of magnitude e^phi, group-tied on sensitive
    /// columns.
    Bernoulli,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Stochastic,
    Expectation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    Epoch,
    Step,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an initialization, verify it fair, and save the checkpoint.
    Init {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Verify a checkpoint over a dataset's input domain; exits 0 on
    /// Verified, 2 on Falsified, 3 on Undecided.
    Verify {
        /// Checkpoint to verify.
        #[arg(value_name = "CKPT")]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Skip the structural certificate and force interval refinement.
        #[arg(long = "no-certificate", default_value_t = false)]
        no_certificate: bool,
        /// Optional directory for the verdict record.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Verified-fair initialization followed by fairness-preserving
    /// training.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Plain SGD baseline with identical instrumentation.
    Erm {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        init: InitArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Fairness and accuracy of a checkpoint on a dataset.
    Eval {
        #[arg(value_name = "CKPT")]
        ckpt: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Optional directory for the result row.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Fair and baseline training from one verified initialization, with
    /// the wall-clock ratio.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        init: InitArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Merge run logs into one curve file keyed by run name.
    Report {
        /// Run-log CSV files.
        #[arg(value_name = "RUN_LOG", required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a deterministic synthetic benchmark (CSV plus schema).
    Gen {
        /// One of adult, bank, credit, compas, or all.
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        out: PathBuf,
        /// Row count override.
        #[arg(long)]
        rows: Option<usize>,
        /// Generator seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ops::dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
