use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use hdmr_gpr::data::{fmt_f64, rmse, split, Dataset, Scaler, SplitSpec};
use hdmr_gpr::hyperopt::{optimize, OptimizationMode, TraceEntry};
use hdmr_gpr::TrainedModel;
use serde::Serialize;

use crate::args::TrainArgs;
use crate::config::{check_memory, FileConfig, KernelSettings, Layout, OptimizeSettings, DEFAULT_MAX_M};
use crate::error::{CliError, CliResult};
use crate::report::{aligned, sci, stdout_err, Provenance};
use crate::{load_dataset, write_file};

#[derive(Serialize)]
struct Effective<'a> {
    data: &'a PathBuf,
    model: &'a PathBuf,
    layout: &'a Layout,
    kernel: &'a KernelSettings,
    optimize: &'a OptimizeSettings,
    train_size: Option<usize>,
    test_size: Option<usize>,
    max_m: usize,
}

pub fn run(a: &TrainArgs, file: &FileConfig, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let data_path = a
        .data
        .clone()
        .or_else(|| file.data.path.clone())
        .ok_or_else(|| CliError::usage("no training data: pass --data"))?;
    let model_path = a.model.clone().ok_or_else(|| CliError::usage("pass --model FILE for the output model"))?;
    let layout = Layout::resolve(a.d, a.terms_file.as_deref(), file)?;
    let kernel = KernelSettings::resolve(&a.kernel, file)?;
    let opt = OptimizeSettings::resolve(&a.optimize, file, seed)?;
    let train_size = a.train_size.or(file.data.train_size);
    let test_size = a.test_size.or(file.data.test_size);
    let max_m = a.max_m.or(file.max_m).unwrap_or(DEFAULT_MAX_M);
    let prov = Provenance::new(
        "train",
        seed,
        &Effective {
            data: &data_path,
            model: &model_path,
            layout: &layout,
            kernel: &kernel,
            optimize: &opt,
            train_size,
            test_size,
            max_m,
        },
    );

    let ds = load_dataset(&data_path)?;
    let (train, test) = select(ds, train_size, test_size, seed)?;
    check_memory(train.len(), max_m)?;
    let spec = layout.build(train.dim(), &kernel, seed)?;

    let start = Instant::now();
    let scaler = Scaler::fit(&train, kernel.scaling)?;
    let x = scaler.scale_points(&train.x);
    let f = scaler.scale_targets(&train.y);
    let (mut model, trace) = match opt.mode {
        None => (TrainedModel::train_scaled(spec, x, f, kernel.delta, scaler)?, None),
        Some(_) => {
            let r = optimize(&spec, &x, &f, kernel.delta, &opt.spec)?;
            (TrainedModel::from_regressor(r.model, scaler), Some(r.trace))
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    model.metadata.extend(prov.metadata());

    let train_rmse = rmse(&model.predict_means(&train.x)?, &train.y)?;
    let test_rmse = match &test {
        Some(t) => Some(rmse(&model.predict_means(&t.x)?, &t.y)?),
        None => None,
    };
    model.save(&model_path).map_err(|e| match e {
        hdmr_gpr::Error::Io(io) => CliError::io(&model_path, io),
        other => other.into(),
    })?;
    if let (Some(path), Some(trace)) = (&a.optimize.trace, &trace) {
        write_file(path, &trace_csv(trace))?;
    }

    let spec = model.spec();
    let lengths: Vec<f64> = spec.terms().iter().map(|t| t.kernel.length()).collect();
    let shared = lengths.iter().all(|&l| l == lengths[0]);
    let mut rows = vec![
        row("M", train.len().to_string()),
        row("D", train.dim().to_string()),
        row("d", spec.order().map_or("mixed".into(), |d| d.to_string())),
        row("N", spec.n_terms().to_string()),
        row("delta", sci(model.delta())),
        row(
            "l",
            if shared {
                sci(lengths[0])
            } else {
                "per term (below)".into()
            },
        ),
        row("log_ml", sci(model.log_marginal_likelihood())),
        row("train_rmse", sci(train_rmse)),
    ];
    if let Some(r) = test_rmse {
        rows.push(row("test_rmse", sci(r)));
        rows.push(row("M_test", test.as_ref().map_or(0, Dataset::len).to_string()));
    }
    if let Some(trace) = &trace {
        rows.push(row("evaluations", trace.len().to_string()));
    }
    rows.push(row("seconds", format!("{seconds:.3}")));
    rows.push(row("model", model_path.display().to_string()));

    prov.write_header(out)?;
    let mut text = aligned(&["quantity", "value"], &rows);
    if !shared {
        let per_term: Vec<Vec<String>> = spec
            .terms()
            .iter()
            .map(|t| vec![t.subset.to_string(), sci(t.kernel.length())])
            .collect();
        text.push('\n');
        text.push_str(&aligned(&["term", "l"], &per_term));
    }
    if opt.mode == Some(OptimizationMode::PerTermLength) && spec.n_terms() > 1 {
        text.push_str("\nper-term lengths disable the fast kernel path; prediction costs scale with N\n");
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}

fn row(k: &str, v: String) -> Vec<String> {
    vec![k.to_string(), v]
}

fn select(
    ds: Dataset,
    train_size: Option<usize>,
    test_size: Option<usize>,
    seed: u64,
) -> CliResult<(Dataset, Option<Dataset>)> {
    if train_size.is_none() && test_size.is_none() {
        return Ok((ds, None));
    }
    let test_size = test_size.unwrap_or(0);
    let train_size = match train_size {
        Some(n) => n,
        None => ds.len().checked_sub(test_size).filter(|&n| n > 0).ok_or_else(|| {
            CliError::usage(format!("--test-size {test_size} leaves no training points out of {}", ds.len()))
        })?,
    };
    let (train, test) = split(&ds, SplitSpec { train_size, test_size, seed })
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok((train, (test_size > 0).then_some(test)))
}

pub(crate) fn trace_csv(trace: &[TraceEntry]) -> String {
    let n = trace.first().map_or(0, |t| t.lengths.len());
    let mut s = String::from("restart,iteration");
    for j in 0..n {
        s.push_str(&format!(",l_{j}"));
    }
    s.push_str(",delta,log_ml\n");
    for t in trace {
        s.push_str(&format!("{},{}", t.restart, t.evaluation));
        for l in &t.lengths {
            s.push(',');
            s.push_str(&fmt_f64(*l));
        }
        s.push(',');
        s.push_str(&fmt_f64(t.delta));
        s.push(',');
        if let Some(v) = t.log_ml {
            s.push_str(&fmt_f64(v));
        }
        s.push('\n');
    }
    s
}
