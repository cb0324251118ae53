//! Datasets, CSV I/O, coordinate/target scaling, splitting and error metrics.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × dim` matrix of input points, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoints")]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPoints {
    dim: usize,
    data: Vec<f64>,
}

impl TryFrom<RawPoints> for Points {
    type Error = Error;

    fn try_from(r: RawPoints) -> Result<Self> {
        Points::new(r.dim, r.data)
    }
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("points need at least one coordinate".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Parse {
                    row: i + 1,
                    column: None,
                    message: format!("expected {dim} coordinates, found {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim.max(1), data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points { dim: self.dim, data }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Points,
    pub y: Vec<f64>,
    pub column_names: Option<Vec<String>>,
    /// Source path or generator descriptor.
    pub provenance: String,
}

impl Dataset {
    pub fn new(x: Points, y: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::Argument("dataset is empty".into()));
        }
        if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            column_names: None,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            column_names: self.column_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Name of feature column `j`, or of the target when `j == dim`.
    pub fn column_name(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) if j < names.len() => names[j].clone(),
            _ if j == self.dim() => "target".to_string(),
            _ => format!("x{j}"),
        }
    }
}

/// Raw numeric table read from CSV, before features and target are separated.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub n_cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.values.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Parse a comma-separated numeric table. A first row containing any
/// non-numeric cell is taken as the header. Row numbers in errors are 1-based
/// line numbers.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let reader = BufReader::new(reader);
    let mut header = None;
    let mut n_cols = 0;
    let mut values = Vec::new();
    let mut seen_first = false;
    for (lineno, line) in reader.lines().enumerate() {
        let row = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_first {
            seen_first = true;
            n_cols = cells.len();
            if cells.iter().any(|c| c.parse::<f64>().is_err()) {
                header = Some(cells.iter().map(|c| c.to_string()).collect());
                continue;
            }
        }
        if cells.len() != n_cols {
            return Err(Error::Parse {
                row,
                column: None,
                message: format!("expected {n_cols} columns, found {}", cells.len()),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: Some(col + 1),
                message: format!("not a number: `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: Some(col + 1),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: None,
            message: "no data rows".into(),
        });
    }
    Ok(Table {
        header,
        n_cols,
        values,
    })
}

/// Split a table into features (all but the last column) and target.
pub fn dataset_from_table(table: Table, provenance: impl Into<String>) -> Result<Dataset> {
    if table.n_cols < 2 {
        return Err(Error::Parse {
            row: 1,
            column: None,
            message: "need at least one feature column and a target column".into(),
        });
    }
    let dim = table.n_cols - 1;
    let n = table.n_rows();
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let r = table.row(i);
        x.extend_from_slice(&r[..dim]);
        y.push(r[dim]);
    }
    let mut ds = Dataset::new(Points::new(dim, x)?, y, provenance)?;
    ds.column_names = table.header;
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    dataset_from_table(read_table(file)?, path.display().to_string())
}

/// Number format for CSV output: 17 significant digits, lossless for f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text of a dataset; `truth` adds a trailing noise-free column.
pub fn dataset_to_csv(ds: &Dataset, truth: Option<&[f64]>) -> String {
    let dim = ds.dim();
    let mut out = String::new();
    let names: Vec<String> = (0..=dim).map(|j| ds.column_name(j)).collect();
    out.push_str(&names.join(","));
    if truth.is_some() {
        out.push_str(",truth");
    }
    out.push('\n');
    for i in 0..ds.len() {
        for v in ds.x.row(i) {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&fmt_f64(ds.y[i]));
        if let Some(t) = truth {
            let _ = write!(out, ",{}", fmt_f64(t[i]));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset, truth: Option<&[f64]>) -> Result<()> {
    fs::write(path, dataset_to_csv(ds, truth))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingKind {
    /// Each column to mean 0, standard deviation 1.
    ZScore,
    /// Each column to [0, 1].
    MinMax,
    Identity,
}

impl std::str::FromStr for ScalingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zscore" | "normalize" => Ok(ScalingKind::ZScore),
            "minmax" | "scale" => Ok(ScalingKind::MinMax),
            "identity" | "none" => Ok(ScalingKind::Identity),
            other => Err(Error::Argument(format!(
                "unknown scaling `{other}` (expected zscore | minmax | identity)"
            ))),
        }
    }
}

/// `scaled = (raw − offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        offset: 0.0,
        scale: 1.0,
    };

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.offset
    }

    fn fit<'a>(kind: ScalingKind, values: impl Iterator<Item = &'a f64> + Clone, name: &str) -> Result<Self> {
        match kind {
            ScalingKind::Identity => Ok(Self::IDENTITY),
            ScalingKind::MinMax => {
                let (lo, hi) = values
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let span = hi - lo;
                if !(span > 0.0) {
                    return Err(Error::Scaling {
                        column: name.to_string(),
                        reason: "zero range".into(),
                    });
                }
                Ok(Affine {
                    offset: lo,
                    scale: span,
                })
            }
            ScalingKind::ZScore => {
                let n = values.clone().count() as f64;
                let mean = values.clone().sum::<f64>() / n;
                let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let sd = var.sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Scaling {
                        column: name.to_string(),
                        reason: "zero standard deviation".into(),
                    });
                }
                Ok(Affine {
                    offset: mean,
                    scale: sd,
                })
            }
        }
    }
}

/// Per-column affine maps for inputs and target. Standard deviations are population (1/M) ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalingKind,
    pub inputs: Vec<Affine>,
    pub target: Affine,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: ScalingKind::Identity,
            inputs: vec![Affine::IDENTITY; dim],
            target: Affine::IDENTITY,
        }
    }

    pub fn fit(ds: &Dataset, kind: ScalingKind) -> Result<Self> {
        let dim = ds.dim();
        let cols = ds.x.as_slice();
        let inputs = (0..dim)
            .map(|j| Affine::fit(kind, cols.iter().skip(j).step_by(dim), &ds.column_name(j)))
            .collect::<Result<Vec<_>>>()?;
        let target = Affine::fit(kind, ds.y.iter(), &ds.column_name(dim))?;
        Ok(Self { kind, inputs, target })
    }

    pub fn dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn scale_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.inputs).map(|(v, a)| a.apply(*v)).collect()
    }

    pub fn unscale_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.inputs).map(|(v, a)| a.invert(*v)).collect()
    }

    pub fn scale_points(&self, x: &Points) -> Points {
        let data = x.rows().flat_map(|r| self.scale_point(r)).collect();
        Points { dim: x.dim(), data }
    }

    pub fn unscale_points(&self, x: &Points) -> Points {
        let data = x.rows().flat_map(|r| self.unscale_point(r)).collect();
        Points { dim: x.dim(), data }
    }

    pub fn scale_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| self.target.apply(*v)).collect()
    }

    pub fn unscale_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| self.target.invert(*v)).collect()
    }

    /// Factor converting scaled-target standard deviations back to original units.
    pub fn target_scale(&self) -> f64 {
        self.target.scale
    }

    pub fn scale_dataset(&self, ds: &Dataset) -> Dataset {
        Dataset {
            x: self.scale_points(&ds.x),
            y: self.scale_targets(&ds.y),
            column_names: ds.column_names.clone(),
            provenance: ds.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// Disjoint uniformly random train and test subsets (sampling without replacement).
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let m = ds.len();
    if spec.train_size == 0 {
        return Err(Error::Argument("training set must not be empty".into()));
    }
    if spec.train_size + spec.test_size > m {
        return Err(Error::Argument(format!(
            "cannot draw {} training + {} test points from {m}",
            spec.train_size, spec.test_size
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let train = ds.select(&idx[..spec.train_size]);
    let test = ds.select(&idx[spec.train_size..spec.train_size + spec.test_size]);
    Ok((train, test))
}

fn check_lengths(pred: &[f64], truth: &[f64], min: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.len() < min {
        return Err(Error::Argument(format!("need at least {min} values, got {}", pred.len())));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth, 1)?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Pearson correlation coefficient.
pub fn pearson_r(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth, 2)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (a, b) = (p - mp, t - mt);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Argument("correlation undefined for a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table(s: &str) -> Result<Dataset> {
        dataset_from_table(read_table(s.as_bytes())?, "inline")
    }

    #[test]
    fn reads_plain_and_headed_csv() {
        let ds = table("1,2,3\n4,5,6\n7,8,9\n").unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.y, vec![3.0, 6.0, 9.0]);
        assert!(ds.column_names.is_none());

        let ds = table("x1,x2,E\n1e-3,2,3\n4,5.5,-6E2\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.column_names.as_deref().unwrap(), ["x1", "x2", "E"]);
        assert_eq!(ds.x.row(0), &[1e-3, 2.0]);
        assert_eq!(ds.y[1], -600.0);
    }

    #[test]
    fn reports_parse_locations() {
        let mut text = String::new();
        for i in 0..16 {
            text.push_str(&format!("{i},{i},{i}\n"));
        }
        text.push_str("1,2\n");
        match table(&text) {
            Err(Error::Parse { row: 17, column: None, .. }) => {}
            other => panic!("expected ragged-row error, got {other:?}"),
        }
        match table("1,2,3\n4,abc,6\n") {
            Err(Error::Parse { row: 2, column: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(table(""), Err(Error::Parse { .. })));
        assert!(matches!(table("a,b,c\n"), Err(Error::Parse { .. })));
        assert!(matches!(table("1,nan,3\n"), Err(Error::Parse { .. })));
        assert!(matches!(table("1\n2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let x = Points::new(2, vec![0.1, 1.0 / 3.0, -2.5e-300, std::f64::consts::PI]).unwrap();
        let ds = Dataset::new(x, vec![1e10 / 7.0, -0.0], "t").unwrap();
        let back = table(&dataset_to_csv(&ds, None)).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
    }

    #[test]
    fn minmax_and_zscore_examples() {
        let ds = Dataset::new(Points::new(1, vec![0.0, 5.0, 10.0]).unwrap(), vec![1.0, 2.0, 3.0], "t").unwrap();
        let s = Scaler::fit(&ds, ScalingKind::MinMax).unwrap();
        assert_eq!(s.scale_points(&ds.x).as_slice(), &[0.0, 0.5, 1.0]);

        let ds = Dataset::new(Points::new(1, vec![1.0, 3.0]).unwrap(), vec![0.0, 4.0], "t").unwrap();
        let s = Scaler::fit(&ds, ScalingKind::ZScore).unwrap();
        assert_eq!(s.scale_points(&ds.x).as_slice(), &[-1.0, 1.0]);
        assert_eq!(s.scale_targets(&ds.y), vec![-1.0, 1.0]);
        assert_eq!(s.target_scale(), 2.0);
    }

    #[test]
    fn constant_column_is_named() {
        let mut ds = Dataset::new(Points::new(2, vec![1.0, 7.0, 2.0, 7.0]).unwrap(), vec![0.0, 1.0], "t").unwrap();
        ds.column_names = Some(vec!["r1".into(), "theta".into(), "E".into()]);
        for kind in [ScalingKind::MinMax, ScalingKind::ZScore] {
            match Scaler::fit(&ds, kind) {
                Err(Error::Scaling { column, .. }) => assert_eq!(column, "theta"),
                other => panic!("{other:?}"),
            }
        }
        assert!(Scaler::fit(&ds, ScalingKind::Identity).is_ok());
    }

    #[test]
    fn split_examples() {
        let ds = Dataset::new(Points::new(1, (0..100).map(f64::from).collect()).unwrap(), (0..100).map(f64::from).collect(), "t").unwrap();
        let spec = SplitSpec { train_size: 60, test_size: 40, seed: 3 };
        let (tr, te) = split(&ds, spec).unwrap();
        let mut all: Vec<f64> = tr.y.iter().chain(&te.y).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.y);
        let (tr2, te2) = split(&ds, spec).unwrap();
        assert_eq!((tr.y, te.y), (tr2.y, te2.y));
        assert!(split(&ds, SplitSpec { train_size: 80, test_size: 40, seed: 0 }).is_err());
    }

    #[test]
    fn metric_examples() {
        let t = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert_relative_eq!(pearson_r(&t, &t).unwrap(), 1.0);
        let shifted: Vec<f64> = t.iter().map(|v| v + 2.0).collect();
        assert_relative_eq!(rmse(&shifted, &t).unwrap(), 2.0);
        assert_relative_eq!(pearson_r(&shifted, &t).unwrap(), 1.0, max_relative = 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson_r(&neg, &t).unwrap(), -1.0, max_relative = 1e-15);
        assert!(rmse(&t, &t[..2]).is_err());
        assert!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn scaler_round_trip(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40),
            kind in prop::sample::select(vec![ScalingKind::MinMax, ScalingKind::ZScore, ScalingKind::Identity]),
        ) {
            let x = Points::from_rows(&rows).unwrap();
            let y: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 - r[1]).collect();
            let ds = Dataset::new(x, y, "p").unwrap();
            if let Ok(s) = Scaler::fit(&ds, kind) {
                let back = s.unscale_points(&s.scale_points(&ds.x));
                for (a, b) in back.as_slice().iter().zip(ds.x.as_slice()) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
                let yb = s.unscale_targets(&s.scale_targets(&ds.y));
                for (a, b) in yb.iter().zip(&ds.y) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }

        #[test]
        fn rmse_is_permutation_covariant(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30),
            seed in any::<u64>(),
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut perm: Vec<usize> = (0..p.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            let tp: Vec<f64> = perm.iter().map(|&i| t[i]).collect();
            let a = rmse(&p, &t).unwrap();
            let b = rmse(&pp, &tp).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }
}
