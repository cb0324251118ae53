use std::io::Write;

use hdmr_gpr::data::{fmt_f64, pearson_r, rmse, Points};
use serde::Serialize;

use crate::args::PredictArgs;
use crate::error::{CliError, CliResult};
use crate::report::{aligned, sci, stdout_err, Provenance};
use crate::{load_model, read_table_file, write_file};

#[derive(Serialize)]
struct Effective<'a> {
    model: &'a std::path::Path,
    model_config_hash: Option<&'a String>,
    input: &'a std::path::Path,
}

pub fn run(a: &PredictArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let prov = Provenance::new(
        "predict",
        seed,
        &Effective {
            model: &a.model,
            model_config_hash: model.metadata.get("config_hash"),
            input: &a.input,
        },
    );
    let table = read_table_file(&a.input)?;
    let dim = model.dim();
    let truth_column = table.header.as_ref().and_then(|h| h.last()).is_some_and(|c| c == "truth");
    let has_truth = match table.n_cols {
        c if c == dim => false,
        c if c == dim + 1 => true,
        c if c == dim + 2 && truth_column => true,
        c => {
            return Err(CliError::usage(format!(
                "{}: {c} columns, but the model expects {dim} features (optionally followed by the target and a `truth` column)",
                a.input.display()
            )))
        }
    };
    let n = table.n_rows();
    let mut xs = Vec::with_capacity(n * dim);
    let mut truth = Vec::new();
    for i in 0..n {
        let r = table.row(i);
        xs.extend_from_slice(&r[..dim]);
        if has_truth {
            truth.push(r[dim]);
        }
    }
    let queries = Points::new(dim, xs)?;
    let preds = model.predict_many(&queries)?;
    let var_scale = model.scaler().target_scale().powi(2);

    let mut names: Vec<String> = match &table.header {
        Some(h) => h[..dim].to_vec(),
        None => (0..dim).map(|j| format!("x{j}")).collect(),
    };
    names.push("mean".into());
    names.push("variance".into());
    if has_truth {
        names.push(table.header.as_ref().map_or("truth".into(), |h| h[dim].clone()));
        names.push("residual".into());
    }
    let mut csv = names.join(",");
    csv.push('\n');
    for (i, p) in preds.iter().enumerate() {
        for v in queries.row(i) {
            csv.push_str(&fmt_f64(*v));
            csv.push(',');
        }
        csv.push_str(&fmt_f64(p.mean));
        csv.push(',');
        csv.push_str(&fmt_f64(p.variance * var_scale));
        if has_truth {
            csv.push(',');
            csv.push_str(&fmt_f64(truth[i]));
            csv.push(',');
            csv.push_str(&fmt_f64(truth[i] - p.mean));
        }
        csv.push('\n');
    }

    let mut summary = vec![vec!["points".to_string(), n.to_string()]];
    if has_truth {
        let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
        summary.push(vec!["test_rmse".into(), sci(rmse(&means, &truth)?)]);
        let r = pearson_r(&means, &truth).map_or("undefined".into(), |r| format!("{r:.6}"));
        summary.push(vec!["pearson_r".into(), r]);
    }
    let summary = aligned(&["quantity", "value"], &summary);
    match &a.output {
        Some(path) => {
            write_file(path, &csv)?;
            prov.write_header(out)?;
            out.write_all(summary.as_bytes()).map_err(stdout_err)
        }
        None => {
            eprint!("{summary}");
            out.write_all(csv.as_bytes()).map_err(stdout_err)
        }
    }
}
