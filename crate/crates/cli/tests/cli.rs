use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hdmr_gpr_cli::run;
use tempfile::TempDir;

fn exec(args: &[&str]) -> Result<String, hdmr_gpr_cli::CliError> {
    let mut out = Vec::new();
    let mut argv = vec!["hdmr-gpr"];
    argv.extend_from_slice(args);
    run(argv, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, args: &[&str]) -> PathBuf {
    let p = path(dir, name);
    let mut a = vec!["generate", "-o", s(&p)];
    a.extend_from_slice(args);
    exec(&a).unwrap();
    p
}

fn report_value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.next().unwrap().to_string())
        })
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{report}"))
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn binary(args: &[&str], envs: &[(&str, &str)]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hdmr-gpr"))
        .args(args)
        .envs(envs.iter().copied())
        .output()
        .unwrap()
}

#[test]
fn train_reports_term_counts() {
    let dir = TempDir::new().unwrap();
    let d7 = generate(&dir, "d7.csv", &["--generator", "additive-1d", "--dim", "7", "--points", "60"]);
    let model = path(&dir, "m.json");
    let r = exec(&["train", "--data", s(&d7), "--model", s(&model), "--d", "1"]).unwrap();
    assert_eq!(report_value(&r, "N"), "7");
    assert_eq!(report_value(&r, "d"), "1");
    assert!(r.starts_with("# hdmr-gpr "));
    assert!(r.contains("seed=0 config=sha256:"));

    let d15 = generate(&dir, "d15.csv", &["--generator", "full-d", "--dim", "15", "--points", "40"]);
    let r = exec(&["train", "--data", s(&d15), "--model", s(&model), "--d", "4"]).unwrap();
    assert_eq!(report_value(&r, "N"), "1365");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let model = path(&dir, "m.json");
    let missing = binary(&["train", "--data", s(&path(&dir, "none.csv")), "--model", s(&model), "--d", "1"], &[]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("none.csv"));

    let dup = path(&dir, "dup.csv");
    fs::write(&dup, "x,y\n0.5,1\n0.5,2\n0.1,0\n").unwrap();
    let singular = binary(&["train", "--data", s(&dup), "--model", s(&model), "--d", "1", "--delta", "0"], &[]);
    assert_eq!(singular.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&singular.stderr).contains("increase δ"));

    assert_eq!(binary(&["train", "--bogus"], &[]).status.code(), Some(2));
    assert_eq!(binary(&["--version"], &[]).status.code(), Some(0));
    let bad_threads = binary(&["generate", "--generator", "full-d", "--dim", "2", "--points", "3"], &[("HDMR_GPR_THREADS", "zero")]);
    assert_eq!(bad_threads.status.code(), Some(2));
    let ok_threads = binary(&["generate", "--generator", "full-d", "--dim", "2", "--points", "3"], &[("HDMR_GPR_THREADS", "1")]);
    assert_eq!(ok_threads.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&ok_threads.stdout).lines().count(), 4);
}

#[test]
fn contradictory_and_guarded_settings_are_rejected() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "additive-1d", "--dim", "3", "--points", "50"]);
    let model = path(&dir, "m.json");
    let terms = path(&dir, "terms.toml");
    fs::write(&terms, "[[terms]]\nindices = [0, 2]\n").unwrap();
    let e = exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "1", "--terms-file", s(&terms)]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    let e = exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "1", "--max-m", "20"]).unwrap_err();
    assert!(e.to_string().contains("--max-m"), "{e}");
    let e = exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "1", "--budget", "5"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);

    let r = exec(&["train", "--data", s(&data), "--model", s(&model), "--terms-file", s(&terms)]).unwrap();
    assert_eq!(report_value(&r, "N"), "1");
    assert_eq!(report_value(&r, "d"), "2");
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "additive-1d", "--dim", "4", "--points", "80"]);
    let cfg = path(&dir, "run.toml");
    fs::write(
        &cfg,
        format!("seed = 5\n[data]\npath = \"{}\"\n[kernel]\nd = 2\nlength = 0.7\n", data.display()),
    )
    .unwrap();
    let model = path(&dir, "m.json");
    let from_file = exec(&["train", "--config", s(&cfg), "--model", s(&model)]).unwrap();
    assert_eq!(report_value(&from_file, "N"), "6");
    assert!(from_file.contains("seed=5"));
    assert_eq!(report_value(&from_file, "l"), "7.0000e-1");
    let overridden = exec(&["train", "--config", s(&cfg), "--model", s(&model), "--d", "1", "--seed", "9"]).unwrap();
    assert_eq!(report_value(&overridden, "N"), "4");
    assert!(overridden.contains("seed=9"));

    fs::write(&cfg, "[kernel]\nlenght = 1.0\n").unwrap();
    assert_eq!(exec(&["train", "--config", s(&cfg), "--model", s(&model)]).unwrap_err().exit_code(), 2);
}

#[test]
fn predicting_training_points_interpolates() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "coupled-2d", "--dim", "3", "--points", "120", "--seed", "4"]);
    let model = path(&dir, "m.json");
    exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "2", "--family", "matern52", "-l", "0.5", "--delta", "1e-12"]).unwrap();
    let preds = path(&dir, "p.csv");
    exec(&["predict", "--model", s(&model), "-i", s(&data), "-o", s(&preds)]).unwrap();
    let rows = csv_rows(&preds);
    let y: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    let range = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let sq: f64 = rows.iter().map(|r| r[6].parse::<f64>().unwrap().powi(2)).sum();
    let rmse = (sq / rows.len() as f64).sqrt();
    assert!(rmse < 1e-6 * range, "rmse {rmse}, range {range}");
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn held_out_additive_predictions_correlate() {
    let dir = TempDir::new().unwrap();
    let train = generate(&dir, "train.csv", &["--generator", "additive-1d", "--dim", "3", "--points", "500", "--seed", "1"]);
    let test = generate(&dir, "test.csv", &["--generator", "additive-1d", "--dim", "3", "--points", "1000", "--seed", "2"]);
    let model = path(&dir, "m.json");
    exec(&["train", "--data", s(&train), "--model", s(&model), "--d", "1", "-l", "0.3", "--delta", "1e-8"]).unwrap();
    let r = exec(&["predict", "--model", s(&model), "-i", s(&test), "-o", s(&path(&dir, "p.csv"))]).unwrap();
    let corr: f64 = report_value(&r, "pearson_r").parse().unwrap();
    assert!(corr > 0.999, "{r}");
}

#[test]
fn predict_rejects_bad_queries() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "additive-1d", "--dim", "2", "--points", "30"]);
    let model = path(&dir, "m.json");
    exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "1"]).unwrap();
    let q = path(&dir, "q.csv");
    fs::write(&q, "0.1,0.2\n0.3,0.4\n0.5,abc\n").unwrap();
    let e = exec(&["predict", "--model", s(&model), "-i", s(&q)]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("row 3"), "{e}");
    fs::write(&q, "0.1,0.2,0.3,0.4\n").unwrap();
    let e = exec(&["predict", "--model", s(&model), "-i", s(&q)]).unwrap_err();
    assert!(e.to_string().contains("expects 2 features"), "{e}");

    fs::write(&q, "0.1,0.2\n").unwrap();
    let out = exec(&["predict", "--model", s(&model), "-i", s(&q)]).unwrap();
    assert!(out.starts_with("x0,x1,mean,variance\n"));
}

#[test]
fn predict_accepts_generated_truth_column() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "additive-1d", "--dim", "2", "--points", "40"]);
    let model = path(&dir, "m.json");
    exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "1"]).unwrap();
    let q = generate(&dir, "q.csv", &["--generator", "additive-1d", "--dim", "2", "--points", "5", "--noise", "0.1", "--with-truth"]);
    let out = exec(&["predict", "--model", s(&model), "-i", s(&q)]).unwrap();
    assert!(out.starts_with("x0,x1,mean,variance,y,residual\n"), "{out}");
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn analyze_ranks_dummy_last() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "additive-1d", "--dim", "7", "--points", "400", "--dummies", "4"]);
    let model = path(&dir, "m.json");
    exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "1", "-l", "0.3", "--delta", "1e-6"]).unwrap();
    let (rep, grid) = (path(&dir, "rep.csv"), path(&dir, "grid.csv"));
    let text = exec(&[
        "analyze", "--model", s(&model), "-o", s(&rep), "--grid", "0", "--resolution", "11", "--grid-output", s(&grid),
    ])
    .unwrap();
    assert!(text.contains("original = "));
    let rows = csv_rows(&rep);
    assert_eq!(rows.len(), 7);
    let shares: f64 = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
    assert!((shares - 1.0).abs() < 1e-12);
    assert_eq!(rows[6][1], "4");

    let g = csv_rows(&grid);
    assert_eq!(g.len(), 11);
    let axis: Vec<f64> = g.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(axis.windows(2).all(|w| w[1] > w[0]));
    assert!(g.iter().all(|r| r[5].parse::<f64>().unwrap().is_finite()));

    let e = exec(&["analyze", "--model", s(&model), "--grid", "0,1", "--grid-output", s(&grid)]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn analyze_grids_a_pair_surface() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "coupled-2d", "--dim", "3", "--points", "150"]);
    let model = path(&dir, "m.json");
    exec(&["train", "--data", s(&data), "--model", s(&model), "--d", "2", "-l", "0.4"]).unwrap();
    let grid = path(&dir, "grid.csv");
    exec(&["analyze", "--model", s(&model), "--grid", "0 1", "--resolution", "5", "--grid-output", s(&grid)]).unwrap();
    let g = csv_rows(&grid);
    assert_eq!(g.len(), 25);
    assert!(g.iter().all(|r| r[0] == "0 1" && !r[2].is_empty() && !r[4].is_empty()));
    let e = exec(&["analyze", "--model", s(&model), "--grid", "0 1 2", "--grid-output", s(&grid)]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn optimizer_trace_is_written() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "additive-1d", "--dim", "3", "--points", "100"]);
    let (model, trace) = (path(&dir, "m.json"), path(&dir, "trace.csv"));
    let r = exec(&[
        "train", "--data", s(&data), "--model", s(&model), "--d", "1", "--optimize", "per-term", "--opt-delta", "--budget", "30", "--trace", s(&trace),
    ])
    .unwrap();
    assert_eq!(report_value(&r, "evaluations"), "30");
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("restart,iteration,l_0,l_1,l_2,delta,log_ml\n"));
    assert_eq!(text.lines().count(), 31);
}

fn bench(dir: &TempDir, name: &str, args: &[&str]) -> Vec<Vec<String>> {
    let out = path(dir, name);
    let mut a = vec!["benchmark", "--no-timing", "-o", s(&out)];
    a.extend_from_slice(args);
    exec(&a).unwrap();
    assert!(fs::read_to_string(&out).unwrap().starts_with("d,M,run,train_rmse,test_rmse,pearson_r,seconds\n"));
    csv_rows(&out)
}

fn cell_mean(rows: &[Vec<String>], d: &str) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| r[0] == d).map(|r| r[4].parse().unwrap()).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn benchmark_additive_target_is_first_order() {
    let dir = TempDir::new().unwrap();
    let rows = bench(
        &dir,
        "b.csv",
        &["--generator", "additive-1d", "--dim", "4", "--d", "1,2", "--m", "200", "--runs", "10", "--test-size", "1000", "-l", "0.4", "--delta", "1e-6"],
    );
    assert_eq!(rows.len(), 20);
    let (d1, d2) = (cell_mean(&rows, "1"), cell_mean(&rows, "2"));
    assert!(d1 <= 1.2 * d2, "d=1 {d1}, d=2 {d2}");
}

#[test]
fn benchmark_full_target_improves_with_order() {
    let dir = TempDir::new().unwrap();
    let rows = bench(
        &dir,
        "b.csv",
        &["--generator", "full-d", "--dim", "4", "--d", "1,4", "--m", "300", "--runs", "3", "--test-size", "1000"],
    );
    assert!(cell_mean(&rows, "4") < cell_mean(&rows, "1"));
}

#[test]
fn benchmark_on_dataset_reports_ranges() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "a.csv", &["--generator", "coupled-2d", "--dim", "3", "--points", "400"]);
    let out = path(&dir, "b.csv");
    let report = exec(&["benchmark", "--data", s(&data), "--d", "1,2", "--m", "50,100", "--runs", "10", "-o", s(&out)]).unwrap();
    assert_eq!(csv_rows(&out).len(), 40);
    let table: Vec<&str> = report.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).collect();
    assert_eq!(table.len(), 4);
    for line in table {
        let range = line.split_whitespace().nth(3).unwrap();
        let (lo, hi) = range.split_once('–').unwrap();
        assert!(lo.parse::<f64>().unwrap() <= hi.parse::<f64>().unwrap(), "{line}");
    }
    let e = exec(&["benchmark", "--data", s(&data), "--m", "500"]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn commands_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = fs::read(generate(&dir, "a.csv", &["--generator", "gp-sample", "--dim", "2", "--points", "50", "--seed", "8", "--with-truth"])).unwrap();
    let b = fs::read(generate(&dir, "b.csv", &["--generator", "gp-sample", "--dim", "2", "--points", "50", "--seed", "8", "--with-truth"])).unwrap();
    assert_eq!(a, b);
    let args = ["--generator", "coupled-2d", "--dim", "3", "--d", "1,2", "--m", "60", "--runs", "2", "--seed", "4"];
    assert_eq!(bench(&dir, "x.csv", &args), bench(&dir, "y.csv", &args));
}
