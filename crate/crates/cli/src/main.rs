//! Batch-mode harness around the sensing library. Every command reads flags
//! (optionally over a JSON config file; flags win), writes its outputs into
//! --out, and records the fully-resolved config plus seed alongside them.
//! Exit codes: 0 success, 2 validation, 3 I/O, 4 numeric failure.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graysense::bayes::LikelihoodMode;
use graysense::ErrorClass;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "graysense",
    version,
    about = "Qubit-frequency sensing: simulate Ramsey datasets, train the graybox model, run Bayesian estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Ramsey dataset plus truth sidecar
    Generate(GenerateArgs),
    /// Train the graybox model on a dataset
    Train(TrainArgs),
    /// Bayesian frequency estimation on one frequency set
    Estimate(EstimateArgs),
    /// Graybox-vs-whitebox estimation across every set in a dataset
    Benchmark(BenchmarkArgs),
    /// Consolidate benchmark outputs into plot-ready long-format files
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root RNG seed; all streams derive from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of frequency sets (overrides plan.n_frequency_sets)
    #[arg(long)]
    sets: Option<usize>,
    /// Tau points per set (overrides plan.taus_per_set)
    #[arg(long)]
    taus: Option<usize>,
    /// Repetitions R per batch (overrides plan.repetitions)
    #[arg(long)]
    repetitions: Option<u64>,
    /// Store exact click probabilities instead of sampled counts
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training dataset (JSON-Lines)
    #[arg(long)]
    dataset: PathBuf,
    /// Adam iterations (overrides train.iterations)
    #[arg(long)]
    iterations: Option<u64>,
    /// Hidden layer widths, e.g. --hidden 32,32
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Adam learning rate (overrides train.learning_rate)
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    /// Trained graybox model (needs --checkpoint)
    Gb,
    /// Analytic whitebox model (needs --t2star-us)
    Wb,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Auto,
    Gaussian,
    Binomial,
}

impl From<ModeArg> for LikelihoodMode {
    fn from(m: ModeArg) -> LikelihoodMode {
        match m {
            ModeArg::Auto => LikelihoodMode::Auto,
            ModeArg::Gaussian => LikelihoodMode::Gaussian,
            ModeArg::Binomial => LikelihoodMode::Binomial,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset holding the measurement batches
    #[arg(long)]
    dataset: PathBuf,
    /// Frequency set to estimate; may be omitted for single-set datasets
    #[arg(long)]
    set_id: Option<u32>,
    /// Likelihood model
    #[arg(long, value_enum)]
    provider: ProviderKind,
    /// Graybox checkpoint (gb provider)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Whitebox dephasing time in microseconds; accepts inf (wb provider)
    #[arg(long)]
    t2star_us: Option<f64>,
    /// Lower prior bound in MHz
    #[arg(long)]
    fmin_mhz: Option<f64>,
    /// Upper prior bound in MHz
    #[arg(long)]
    fmax_mhz: Option<f64>,
    /// Posterior grid subintervals
    #[arg(long)]
    grid_m: Option<usize>,
    /// Random batch orderings to average over
    #[arg(long)]
    orderings: Option<usize>,
    /// Count-likelihood form
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset holding every frequency set
    #[arg(long)]
    dataset: PathBuf,
    /// Truth sidecar mapping set_id to f_B (from generate)
    #[arg(long)]
    truth: PathBuf,
    /// Graybox checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Whitebox dephasing time in microseconds; accepts inf
    #[arg(long)]
    t2star_us: f64,
    /// Lower prior bound in MHz
    #[arg(long)]
    fmin_mhz: Option<f64>,
    /// Upper prior bound in MHz
    #[arg(long)]
    fmax_mhz: Option<f64>,
    /// Posterior grid subintervals
    #[arg(long)]
    grid_m: Option<usize>,
    /// Random batch orderings to average over
    #[arg(long)]
    orderings: Option<usize>,
    /// Count-likelihood form
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// A set converges when |f_hat - f_B| is at most this many grid spacings
    #[arg(long, default_value_t = 10.0)]
    tolerance_spacings: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Benchmark output directory to consolidate
    #[arg(long)]
    benchmark: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => commands::run_generate(args),
        Command::Train(args) => commands::run_train(args),
        Command::Estimate(args) => commands::run_estimate(args),
        Command::Benchmark(args) => commands::run_benchmark(args),
        Command::Report(args) => commands::run_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Io => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
