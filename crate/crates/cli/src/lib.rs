//! Command-line workflows: generate, train, predict, analyze, benchmark.
//!
//! Exit codes are 0 on success, 1 on numerical failure (e.g. a Gram matrix
//! that is not positive definite) and 2 on usage or I/O errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::Path;

use clap::Parser;
use hdmr_gpr::data::{dataset_from_table, read_table, Dataset, Table};
use hdmr_gpr::TrainedModel;

pub mod args;
pub mod config;
pub mod error;
pub mod report;

mod cmd;

pub use args::Cli;
pub use error::{CliError, CliResult};

use args::Command;
use config::FileConfig;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "HDMR_GPR_THREADS";

/// Parse `argv` (program name first) and run the command, writing reports to `out`.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::usage(e.to_string()))?;
    execute(cli, out)
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    match &cli.command {
        Command::Generate(a) => cmd::generate::run(a, &file, seed, out),
        Command::Train(a) => cmd::train::run(a, &file, seed, out),
        Command::Predict(a) => cmd::predict::run(a, seed, out),
        Command::Analyze(a) => cmd::analyze::run(a, seed, out),
        Command::Benchmark(a) => cmd::benchmark::run(a, &file, seed, out),
    }
}

/// Size the global thread pool from `HDMR_GPR_THREADS`, if set.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))
}

pub(crate) fn read_table_file(path: &Path) -> CliResult<Table> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_table(file).map_err(|e| match e {
        hdmr_gpr::Error::Io(io) => CliError::io(path, io),
        hdmr_gpr::Error::Parse { row, column, message } => CliError::usage(format!(
            "{}: row {row}{}: {message}",
            path.display(),
            column.map(|c| format!(", column {c}")).unwrap_or_default()
        )),
        other => other.into(),
    })
}

pub(crate) fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let table = read_table_file(path)?;
    Ok(dataset_from_table(table, path.display().to_string())?)
}

pub(crate) fn load_model(path: &Path) -> CliResult<TrainedModel> {
    TrainedModel::load(path).map_err(|e| match e {
        hdmr_gpr::Error::Io(io) => CliError::io(path, io),
        other => other.into(),
    })
}

pub(crate) fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
