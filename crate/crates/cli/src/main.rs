use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Inference, accelerator simulation and fixture tooling for VTR models.
#[derive(Parser, Debug)]
#[command(name = "vtr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify one image and print class probabilities.
    Infer(InferArgs),
    /// Run the accelerator model and print its cycle report.
    Simulate(SimulateArgs),
    /// Print parameter and MAC counts for a configuration.
    Count(CountArgs),
    /// Check committed golden fixtures against the engine.
    Validate(ValidateArgs),
    /// Measure wall-clock inference latency.
    Bench(BenchArgs),
    /// Compare an activation trace against a reference bundle.
    TraceCompare(TraceCompareArgs),
}

/// Model hyper-parameters for runs without a weight file.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Named configuration: best-mstar
    #[arg(long)]
    pub preset: Option<String>,
    /// Dataset defaults for image size and classes: mstar, synthwake, gbsar
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    /// Hidden dimension
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
}

/// Where the model comes from: a weight file, or a config plus seed.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// VTRW weight file
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Seed for random weights when no weight file is given
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// VTRT or PGM image
    #[arg(long)]
    pub image: PathBuf,
    /// Write every stage as a VTRT bundle into this directory
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// VTRT or PGM image; a synthetic pattern when omitted
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// HCU count
    #[arg(long, default_value_t = 4)]
    pub ph: usize,
    /// PE rows per HCU
    #[arg(long, default_value_t = 12)]
    pub pt: usize,
    /// PE columns per HCU
    #[arg(long, default_value_t = 2)]
    pub pc: usize,
    /// Systolic array side per PE
    #[arg(long, default_value_t = 8)]
    pub ppe: usize,
    /// Block size
    #[arg(long, default_value_t = 16)]
    pub block: usize,
    #[arg(long, default_value_t = 300.0)]
    pub clock_mhz: f64,
    /// ideal or fill-drain
    #[arg(long, default_value = "ideal")]
    pub cost_model: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// Read the config embedded in a VTRW file
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Print only the count without class token, positions and QKV biases
    #[arg(long)]
    pub paper_comparable: bool,
    /// Print every tabulated configuration
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Directory holding manifest.json
    #[arg(long)]
    pub fixtures: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Timed inferences per thread
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Untimed inferences per thread before measuring
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct TraceCompareArgs {
    /// Reference bundle directory
    #[arg(long)]
    pub reference: PathBuf,
    /// Bundle to check; otherwise the trace is computed from --weights and --image
    #[arg(long, conflicts_with_all = ["weights", "image"])]
    pub trace: Option<PathBuf>,
    #[arg(long, requires = "image")]
    pub weights: Option<PathBuf>,
    #[arg(long, requires = "weights")]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long)]
    pub json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Infer(a) => commands::infer(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Count(a) => commands::count(a),
        Command::Validate(a) => commands::validate(a),
        Command::Bench(a) => commands::bench(a),
        Command::TraceCompare(a) => commands::trace_compare(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
