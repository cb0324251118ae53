use std::io::Write;

use hdmr_gpr::analysis::{component_grid, component_report};
use hdmr_gpr::data::fmt_f64;
use hdmr_gpr::SubsetIndex;
use serde::Serialize;

use crate::args::AnalyzeArgs;
use crate::error::{CliError, CliResult};
use crate::report::{aligned, sci, stdout_err, Provenance};
use crate::{load_model, write_file};

#[derive(Serialize)]
struct Effective<'a> {
    model: &'a std::path::Path,
    model_config_hash: Option<&'a String>,
    grid: &'a [String],
    resolution: usize,
}

pub fn run(a: &AnalyzeArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let grids = a
        .grid
        .iter()
        .map(|g| SubsetIndex::parse_csv_field(&g.replace(',', " ")).map_err(|e| CliError::usage(format!("--grid: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    if !grids.is_empty() && a.grid_output.is_none() {
        return Err(CliError::usage("--grid needs --grid-output FILE"));
    }
    let model = load_model(&a.model)?;
    let prov = Provenance::new(
        "analyze",
        seed,
        &Effective {
            model: &a.model,
            model_config_hash: model.metadata.get("config_hash"),
            grid: &a.grid,
            resolution: a.resolution,
        },
    );
    let report = component_report(&model);

    let mut csv = String::from("rank,subset,variance,share,amplitude,length\n");
    let mut rows = Vec::new();
    for (rank, e) in report.entries.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rank + 1,
            e.subset.to_csv_field(),
            fmt_f64(e.variance),
            fmt_f64(e.share),
            fmt_f64(e.amplitude),
            fmt_f64(e.length)
        ));
        rows.push(vec![
            (rank + 1).to_string(),
            e.subset.to_string(),
            sci(e.variance),
            format!("{:.4}", e.share),
            sci(e.amplitude),
            sci(e.length),
        ]);
    }

    let mut grid_csv = String::from("subset,scaled_a,scaled_b,original_a,original_b,value\n");
    for subset in &grids {
        for p in component_grid(&model, subset, a.resolution)? {
            let cell = |v: &[f64], k: usize| v.get(k).map(|x| fmt_f64(*x)).unwrap_or_default();
            grid_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                subset.to_csv_field(),
                cell(&p.scaled, 0),
                cell(&p.scaled, 1),
                cell(&p.original, 0),
                cell(&p.original, 1),
                fmt_f64(p.value)
            ));
        }
    }

    if let Some(path) = &a.output {
        write_file(path, &csv)?;
    }
    if let Some(path) = &a.grid_output {
        write_file(path, &grid_csv)?;
    }

    prov.write_header(out)?;
    let mut text = aligned(&["rank", "subset", "variance", "share", "amplitude", "l"], &rows);
    let t = model.scaler().target;
    text.push_str(&format!(
        "\ntotal component variance {}\nvariance of the fit       {}\n",
        sci(report.total_variance),
        sci(report.prediction_variance)
    ));
    text.push_str(&format!(
        "values are in scaled target units: original = {} + {} * scaled\n",
        fmt_f64(t.offset),
        fmt_f64(t.scale)
    ));
    if report.uniform_zero {
        text.push_str("uniform-zero: the fit is flat over the training set; shares do not rank variables\n");
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)
}
