use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use hdmr_gpr::data::{fmt_f64, pearson_r, rmse, split, Dataset, SplitSpec};
use hdmr_gpr::synth::SynthSpec;
use hdmr_gpr::TrainedModel;
use serde::Serialize;

use crate::args::BenchmarkArgs;
use crate::config::{check_memory, resolve_generator, FileConfig, KernelSettings, DEFAULT_MAX_M};
use crate::error::{CliError, CliResult};
use crate::report::{aligned, sci, stdout_err, Provenance};
use crate::{load_dataset, write_file};

pub const CSV_HEADER: &str = "d,M,run,train_rmse,test_rmse,pearson_r,seconds";
const DEFAULT_RUNS: usize = 10;
const DEFAULT_GENERATED_TEST: usize = 5000;

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
enum Source {
    Dataset(PathBuf),
    Generator(SynthSpec),
}

#[derive(Serialize)]
struct Effective<'a> {
    source: &'a Source,
    d: &'a [usize],
    m: &'a [usize],
    runs: usize,
    test_size: Option<usize>,
    kernel: &'a KernelSettings,
    max_m: usize,
    no_timing: bool,
}

#[derive(Debug, Clone)]
struct Row {
    d: usize,
    m: usize,
    run: usize,
    train_rmse: f64,
    test_rmse: f64,
    pearson_r: f64,
    seconds: f64,
}

pub fn run(a: &BenchmarkArgs, file: &FileConfig, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let b = &file.benchmark;
    let orders = a.d.clone().or_else(|| b.d.clone()).unwrap_or_else(|| vec![1]);
    let sizes = a
        .m
        .clone()
        .or_else(|| b.m.clone())
        .ok_or_else(|| CliError::usage("benchmark needs training sizes: pass --m"))?;
    let runs = a.runs.or(b.runs).unwrap_or(DEFAULT_RUNS);
    let test_size = a.test_size.or(b.test_size);
    let kernel = KernelSettings::resolve(&a.kernel, file)?;
    let max_m = a.max_m.or(file.max_m).unwrap_or(DEFAULT_MAX_M);
    if orders.is_empty() || sizes.is_empty() || runs == 0 {
        return Err(CliError::usage("--d, --m and --runs must be non-empty"));
    }
    if orders.contains(&0) || sizes.contains(&0) {
        return Err(CliError::usage("orders and training sizes must be positive"));
    }
    if a.generator.points.is_some() {
        return Err(CliError::usage("benchmark takes training sizes from --m, not --points"));
    }
    let data_path = a.data.clone().or_else(|| file.data.path.clone());
    let source = match data_path {
        Some(p) => {
            if a.generator.generator.is_some() {
                return Err(CliError::usage("--data and --generator are mutually exclusive"));
            }
            Source::Dataset(p)
        }
        None => Source::Generator(resolve_generator(&a.generator, file, seed)?),
    };
    for &m in &sizes {
        check_memory(m, max_m)?;
    }
    let prov = Provenance::new(
        "benchmark",
        seed,
        &Effective {
            source: &source,
            d: &orders,
            m: &sizes,
            runs,
            test_size,
            kernel: &kernel,
            max_m,
            no_timing: a.no_timing,
        },
    );

    let full = match &source {
        Source::Dataset(p) => Some(load_dataset(p)?),
        Source::Generator(_) => None,
    };
    let dim = match (&source, &full) {
        (_, Some(ds)) => ds.dim(),
        (Source::Generator(g), None) => g.dim,
        _ => unreachable!(),
    };
    if let Some(&d) = orders.iter().find(|&&d| d > dim) {
        return Err(CliError::usage(format!("order d={d} exceeds D={dim}")));
    }

    let mut rows = Vec::new();
    for &m in &sizes {
        for run in 0..runs {
            let draw_seed = mix(seed, &[m as u64, run as u64]);
            let (train, test) = match (&source, &full) {
                (Source::Generator(g), _) => generated(g, m, test_size.unwrap_or(DEFAULT_GENERATED_TEST), draw_seed)?,
                (Source::Dataset(_), Some(ds)) => {
                    let max_train = sizes.iter().copied().max().unwrap_or(m);
                    let test_size = match test_size {
                        Some(t) => t,
                        None => ds.len().saturating_sub(max_train),
                    };
                    split(
                        ds,
                        SplitSpec {
                            train_size: m,
                            test_size,
                            seed: draw_seed,
                        },
                    )
                    .map_err(|e| CliError::usage(e.to_string()))?
                }
                _ => unreachable!(),
            };
            if test.len() < 2 {
                return Err(CliError::usage("benchmark needs at least 2 test points per run"));
            }
            for &d in &orders {
                let row = cell(&kernel, &train, &test, d, run, draw_seed).inspect_err(|_| {
                    eprintln!("benchmark cell d={d} M={m} run={run} failed");
                })?;
                rows.push(row);
            }
        }
    }
    let order_pos = |d: usize| orders.iter().position(|&o| o == d).unwrap_or(0);
    let size_pos = |m: usize| sizes.iter().position(|&s| s == m).unwrap_or(0);
    rows.sort_by_key(|r| (order_pos(r.d), size_pos(r.m), r.run));

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        let seconds = if a.no_timing { "0".to_string() } else { format!("{:.3}", r.seconds) };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.d,
            r.m,
            r.run,
            fmt_f64(r.train_rmse),
            fmt_f64(r.test_rmse),
            fmt_f64(r.pearson_r),
            seconds
        ));
    }

    let mut summary = Vec::new();
    for &d in &orders {
        for &m in &sizes {
            let cell: Vec<&Row> = rows.iter().filter(|r| r.d == d && r.m == m).collect();
            let (lo, hi) = min_max(cell.iter().map(|r| r.test_rmse));
            let (tlo, thi) = min_max(cell.iter().map(|r| r.train_rmse));
            let (rlo, _) = min_max(cell.iter().map(|r| r.pearson_r));
            summary.push(vec![
                d.to_string(),
                m.to_string(),
                cell.len().to_string(),
                format!("{}–{}", sci(lo), sci(hi)),
                format!("{}–{}", sci(tlo), sci(thi)),
                format!("{rlo:.6}"),
            ]);
        }
    }
    let table = aligned(&["d", "M", "runs", "test rmse (min–max)", "train rmse (min–max)", "min r"], &summary);

    match &a.output {
        Some(path) => {
            write_file(path, &csv)?;
            prov.write_header(out)?;
            out.write_all(table.as_bytes()).map_err(stdout_err)
        }
        None => {
            eprint!("{table}");
            out.write_all(csv.as_bytes()).map_err(stdout_err)
        }
    }
}

fn generated(g: &SynthSpec, m: usize, test_size: usize, seed: u64) -> CliResult<(Dataset, Dataset)> {
    let gen = |n: usize, s: u64| -> CliResult<Dataset> {
        let spec = SynthSpec { m: n, seed: s, ..g.clone() };
        Ok(spec.generate().map_err(|e| CliError::usage(e.to_string()))?.dataset)
    };
    Ok((gen(m, seed)?, gen(test_size, mix(seed, &[u64::MAX]))?))
}

fn cell(kernel: &KernelSettings, train: &Dataset, test: &Dataset, d: usize, run: usize, seed: u64) -> CliResult<Row> {
    let start = Instant::now();
    let spec = kernel.uniform_spec(train.dim(), d, seed)?;
    let model = TrainedModel::fit(spec, train, kernel.scaling, kernel.delta)?;
    let train_rmse = rmse(&model.predict_means(&train.x)?, &train.y)?;
    let pred = model.predict_means(&test.x)?;
    let test_rmse = rmse(&pred, &test.y)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Row {
        d,
        m: train.len(),
        run,
        train_rmse,
        test_rmse,
        pearson_r: pearson_r(&pred, &test.y).unwrap_or(f64::NAN),
        seconds,
    })
}

fn min_max(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Derive an independent seed from a base seed and cell coordinates (splitmix64 finalizer).
fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}
