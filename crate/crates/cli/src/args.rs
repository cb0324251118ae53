use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hdmr-gpr", version, about = "Gaussian process regression with HDMR-structured kernels")]
pub struct Cli {
    /// TOML configuration file. Flags override values from the file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Fit a model and write it to a model file.
    Train(TrainArgs),
    /// Predict means and variances at query points.
    Predict(PredictArgs),
    /// Rank the component functions of a trained model.
    Analyze(AnalyzeArgs),
    /// Sweep orders and training sizes over repeated random draws.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Default, Args)]
pub struct GeneratorArgs {
    /// additive-1d | coupled-2d | full-d | gp-sample
    #[arg(long, value_name = "FAMILY")]
    pub generator: Option<String>,
    #[arg(long, value_name = "D")]
    pub dim: Option<usize>,
    /// Number of points.
    #[arg(long, value_name = "M")]
    pub points: Option<usize>,
    /// Standard deviation of added Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Variables the target ignores, e.g. `2,5`.
    #[arg(long, value_delimiter = ',')]
    pub dummies: Option<Vec<usize>>,
    /// Coupled pairs for coupled-2d, e.g. `0-1,2-3`.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Input box as `lo:hi`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Length scale of the gp-sample covariance.
    #[arg(long)]
    pub gp_length: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct KernelArgs {
    /// exp | matern32 | matern52 | se
    #[arg(long)]
    pub family: Option<String>,
    /// Length scale, in scaled coordinates.
    #[arg(long, short = 'l')]
    pub length: Option<f64>,
    /// `uniform` or `random:lo:hi`.
    #[arg(long)]
    pub amplitudes: Option<String>,
    /// Diagonal jitter δ added to the Gram matrix.
    #[arg(long)]
    pub delta: Option<f64>,
    /// zscore | minmax | identity
    #[arg(long)]
    pub scaling: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct OptimizeArgs {
    /// none | shared | per-term
    #[arg(long)]
    pub optimize: Option<String>,
    /// Optimize δ along with the length scales.
    #[arg(long)]
    pub opt_delta: bool,
    /// Objective evaluations per restart.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Length-scale bounds as `lo:hi`.
    #[arg(long)]
    pub bounds: Option<String>,
    /// δ bounds as `lo:hi`.
    #[arg(long)]
    pub delta_bounds: Option<String>,
    /// Write the evaluation trace as CSV.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Append the noise-free target as a `truth` column.
    #[arg(long)]
    pub with_truth: bool,
    /// Output CSV; standard output if omitted.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV (features, then target).
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Uniform HDMR order.
    #[arg(long)]
    pub d: Option<usize>,
    /// Explicit term list (TOML).
    #[arg(long, value_name = "FILE")]
    pub terms_file: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub optimize: OptimizeArgs,
    /// Train on a random subset of this size.
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Hold out this many further points and report their RMSE.
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Largest training set accepted (memory guard).
    #[arg(long)]
    pub max_m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Query CSV: D feature columns, optionally followed by the true target.
    #[arg(long, short = 'i', value_name = "FILE")]
    pub input: PathBuf,
    /// Output CSV; standard output if omitted.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Component report as CSV.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Component to tabulate on a grid, e.g. `0` or `0 3` (repeatable).
    #[arg(long)]
    pub grid: Vec<String>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 50)]
    pub resolution: usize,
    /// CSV for the grid values.
    #[arg(long, value_name = "FILE")]
    pub grid_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Dataset to split; a generator is used instead when omitted.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Orders to sweep, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<usize>>,
    /// Training sizes to sweep, e.g. `500,1000`.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Repetitions per cell.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Per-run CSV.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Write 0 in the `seconds` column so output is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub max_m: Option<usize>,
}
