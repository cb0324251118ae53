//! Exact Gaussian process regression.
//!
//! Training factorizes the jittered Gram matrix `K + δI = L Lᵀ` once; the
//! predictive mean is `K*(x) · c` with `c = (K + δI)⁻¹ f`, and the predictive
//! variance is `k(x, x) − vᵀv` with `L v = K*(x)ᵀ`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use faer::linalg::solvers::{Llt, Solve};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, MatRef, Par, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points, Scaler, ScalingKind};
use crate::dot::Dot2;
use crate::error::{Error, Result};
use crate::hdmr_kernel::HdmrKernelSpec;
use crate::kernels::{sq_dist, BaseKernel};

/// Queries evaluated per batch when predicting many points.
const QUERY_BLOCK: usize = 256;

/// A covariance function over points of a fixed dimension.
pub trait Covariance: Sync {
    fn dim(&self) -> usize;

    /// `k(x, y)`; both slices have length [`dim`](Covariance::dim).
    fn cov(&self, x: &[f64], y: &[f64]) -> f64;
}

impl Covariance for HdmrKernelSpec {
    fn dim(&self) -> usize {
        HdmrKernelSpec::dim(self)
    }

    #[inline]
    fn cov(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_unchecked(x, y)
    }
}

/// A single Matérn kernel over all coordinates: ordinary GPR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlainKernel {
    pub dim: usize,
    pub kernel: BaseKernel,
}

impl Covariance for PlainKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn cov(&self, x: &[f64], y: &[f64]) -> f64 {
        self.kernel.eval_sq(sq_dist(x, y))
    }
}

fn check_dim<K: Covariance + ?Sized>(cov: &K, got: usize) -> Result<()> {
    if got != cov.dim() {
        return Err(Error::Dimension {
            expected: cov.dim(),
            got,
        });
    }
    Ok(())
}

/// Column-major `m × m` buffer with the lower triangle (diagonal included) of `K + δI`.
fn gram_lower<K: Covariance + ?Sized>(cov: &K, x: &Points, delta: f64) -> Vec<f64> {
    let m = x.len();
    let mut buf = vec![0.0; m * m];
    buf.par_chunks_mut(m).enumerate().for_each(|(j, col)| {
        let xj = x.row(j);
        for (i, slot) in col.iter_mut().enumerate().skip(j) {
            *slot = cov.cov(x.row(i), xj);
        }
        col[j] += delta;
    });
    buf
}

/// Symmetric Gram matrix `K + δI` (both triangles filled).
pub fn build_gram<K: Covariance + ?Sized>(cov: &K, x: &Points, delta: f64) -> Result<Mat<f64>> {
    check_dim(cov, x.dim())?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Argument(format!("δ must be finite and ≥ 0, got {delta}")));
    }
    let m = x.len();
    let buf = gram_lower(cov, x, delta);
    Ok(Mat::from_fn(m, m, |i, j| {
        if i >= j {
            buf[j * m + i]
        } else {
            buf[i * m + j]
        }
    }))
}

/// Cross-covariance block: column `q` holds `k(query_q, x_n)` for all training `n`.
fn cross_cov<K: Covariance + ?Sized>(cov: &K, x: &Points, queries: &[&[f64]]) -> Mat<f64> {
    let m = x.len();
    let mut out = Mat::<f64>::zeros(m, queries.len());
    for (q, query) in queries.iter().enumerate() {
        let col = out.col_mut(q).try_as_col_major_mut().expect("contiguous column").as_slice_mut();
        for (n, slot) in col.iter_mut().enumerate() {
            *slot = cov.cov(query, x.row(n));
        }
    }
    out
}

/// `y = A c` for symmetric `A` given by its lower triangle in column-major `buf`.
fn sym_lower_matvec(buf: &[f64], m: usize, c: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m];
    for j in 0..m {
        let col = &buf[j * m..(j + 1) * m];
        y[j] += col[j] * c[j];
        for i in j + 1..m {
            y[i] += col[i] * c[j];
            y[j] += col[i] * c[i];
        }
    }
    y
}

/// Exact GP in the coordinates it was trained in (no scaling).
#[derive(Debug)]
pub struct Regressor<K: Covariance> {
    cov: K,
    x: Points,
    f: Vec<f64>,
    delta: f64,
    llt: Llt<f64>,
    c: Vec<f64>,
    log_ml: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Clamped to be ≥ 0.
    pub variance: f64,
}

impl<K: Covariance> Regressor<K> {
    pub fn train(cov: K, x: Points, f: Vec<f64>, delta: f64) -> Result<Self> {
        check_dim(&cov, x.dim())?;
        let m = x.len();
        if m == 0 {
            return Err(Error::Argument("cannot train on an empty dataset".into()));
        }
        if f.len() != m {
            return Err(Error::Dimension { expected: m, got: f.len() });
        }
        if !x.all_finite() || f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("training data contain non-finite values".into()));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Argument(format!("δ must be finite and ≥ 0, got {delta}")));
        }
        let buf = gram_lower(&cov, &x, delta);
        let llt = factorize(&buf, m)?;
        drop(buf);
        let rhs = MatRef::from_column_major_slice(&f, m, 1);
        let sol = llt.solve(rhs);
        let c: Vec<f64> = (0..m).map(|i| sol[(i, 0)]).collect();
        let log_ml = log_marginal_likelihood_from(&llt, &f, &c);
        Ok(Self {
            cov,
            x,
            f,
            delta,
            llt,
            c,
            log_ml,
        })
    }

    pub fn covariance(&self) -> &K {
        &self.cov
    }

    pub fn inputs(&self) -> &Points {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.f
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `c = (K + δI)⁻¹ f`.
    pub fn coefficients(&self) -> &[f64] {
        &self.c
    }

    /// Lower Cholesky factor of `K + δI`.
    pub fn cholesky_factor(&self) -> MatRef<'_, f64> {
        self.llt.L()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_ml
    }

    /// Recompute the log marginal likelihood from the stored factor and coefficients.
    pub fn recompute_log_marginal_likelihood(&self) -> f64 {
        log_marginal_likelihood_from(&self.llt, &self.f, &self.c)
    }

    
    /// `K*(x) · c`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(&self.cov, x.len())?;
        Ok(self.mean_unchecked(x))
    }

    fn mean_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = Dot2::default();
        for (n, &cn) in self.c.iter().enumerate() {
            acc.add(self.cov.cov(x, self.x.row(n)), cn);
        }
        acc.value()
    }

    /// Predictive variance before clamping; may be slightly negative from rounding.
    pub fn predict_variance_unclamped(&self, x: &[f64]) -> Result<f64> {
        check_dim(&self.cov, x.len())?;
        Ok(self.predict_block(&[x])[0].1)
    }

    pub fn predict_variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_variance_unclamped(x)?.max(0.0))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_dim(&self.cov, x.len())?;
        let (mean, var) = self.predict_block(&[x])[0];
        Ok(Prediction {
            mean,
            variance: var.max(0.0),
        })
    }

    /// Means only, for many queries.
    pub fn predict_means(&self, queries: &Points) -> Result<Vec<f64>> {
        check_dim(&self.cov, queries.dim())?;
        Ok(queries
            .as_slice()
            .par_chunks(queries.dim())
            .map(|q| self.mean_unchecked(q))
            .collect())
    }

    /// Means and clamped variances for many queries.
    pub fn predict_many(&self, queries: &Points) -> Result<Vec<Prediction>> {
        check_dim(&self.cov, queries.dim())?;
        let rows: Vec<&[f64]> = queries.rows().collect();
        Ok(rows
            .par_chunks(QUERY_BLOCK)
            .flat_map_iter(|block| self.predict_block(block))
            .map(|(mean, var)| Prediction {
                mean,
                variance: var.max(0.0),
            })
            .collect())
    }

    /// (mean, unclamped variance) per query.
    fn predict_block(&self, queries: &[&[f64]]) -> Vec<(f64, f64)> {
        let m = self.x.len();
        let mut kstar = cross_cov(&self.cov, &self.x, queries);
        let means: Vec<f64> = (0..queries.len())
            .map(|q| {
                let col = kstar.col(q);
                let mut acc = Dot2::default();
                for n in 0..m {
                    acc.add(col[n], self.c[n]);
                }
                acc.value()
            })
            .collect();
        solve_lower_triangular_in_place(self.llt.L(), kstar.as_mut(), Par::Seq);
        queries
            .iter()
            .enumerate()
            .map(|(q, query)| {
                let v = kstar.col(q);
                let mut vv = 0.0;
                for n in 0..m {
                    vv += v[n] * v[n];
                }
                (means[q], self.cov.cov(query, query) - vv)
            })
            .collect()
    }

    /// Normwise backward error `‖(K + δI)c − f‖∞ / (‖K + δI‖∞ ‖c‖∞ + ‖f‖∞)`,
    /// recomputed from the kernel.
    pub fn residual(&self) -> f64 {
        let m = self.x.len();
        let buf = gram_lower(&self.cov, &self.x, self.delta);
        backward_error(&buf, m, &self.c, &self.f)
    }
}

fn factorize(lower: &[f64], m: usize) -> Result<Llt<f64>> {
    let a = MatRef::from_column_major_slice(lower, m, m);
    a.llt(Side::Lower).map_err(|e| match e {
        faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index } => {
            Error::Training { pivot: index }
        }
    })
}

fn log_marginal_likelihood_from(llt: &Llt<f64>, f: &[f64], c: &[f64]) -> f64 {
    let m = f.len();
    let fit: f64 = f.iter().zip(c).map(|(a, b)| a * b).sum();
    let l = llt.L();
    let log_det_half: f64 = (0..m).map(|i| l[(i, i)].ln()).sum();
    -0.5 * fit - log_det_half - 0.5 * m as f64 * (2.0 * PI).ln()
}

fn backward_error(lower: &[f64], m: usize, c: &[f64], f: &[f64]) -> f64 {
    let kc = sym_lower_matvec(lower, m, c);
    let r = kc.iter().zip(f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // ‖A‖∞ = max row sum of |a_ij|, using symmetry
    let mut row_sums = vec![0.0; m];
    for j in 0..m {
        let col = &lower[j * m..(j + 1) * m];
        row_sums[j] += col[j].abs();
        for i in j + 1..m {
            row_sums[i] += col[i].abs();
            row_sums[j] += col[i].abs();
        }
    }
    let norm_a = row_sums.iter().copied().fold(0.0, f64::max);
    let norm_c = c.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let norm_f = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let denom = norm_a * norm_c + norm_f;
    if denom == 0.0 {
        0.0
    } else {
        r / denom
    }
}

/// A trained HDMR-kernel GP together with the scaling of its data.
///
/// Queries are given in original coordinates; means are returned in original
/// target units, variances in scaled-target units (multiply by
/// `target_scale()²` for original units).
#[derive(Debug)]
pub struct TrainedModel {
    gp: Regressor<HdmrKernelSpec>,
    scaler: Scaler,
    /// Free-form provenance (seed, configuration hash, version…).
    pub metadata: BTreeMap<String, String>,
}

impl TrainedModel {
    /// Fit a scaler of `kind` to `ds`, then train in scaled coordinates.
    pub fn fit(spec: HdmrKernelSpec, ds: &Dataset, kind: ScalingKind, delta: f64) -> Result<Self> {
        check_dim(&spec, ds.dim())?;
        let scaler = Scaler::fit(ds, kind)?;
        let x = scaler.scale_points(&ds.x);
        let f = scaler.scale_targets(&ds.y);
        Self::train_scaled(spec, x, f, delta, scaler)
    }

    /// Train on data that are already in scaled coordinates.
    pub fn train_scaled(spec: HdmrKernelSpec, x: Points, f: Vec<f64>, delta: f64, scaler: Scaler) -> Result<Self> {
        if scaler.dim() != spec.dim() {
            return Err(Error::Dimension {
                expected: spec.dim(),
                got: scaler.dim(),
            });
        }
        let gp = Regressor::train(spec, x, f, delta)?;
        Ok(Self::from_regressor(gp, scaler))
    }

    pub fn from_regressor(gp: Regressor<HdmrKernelSpec>, scaler: Scaler) -> Self {
        Self {
            gp,
            scaler,
            metadata: BTreeMap::new(),
        }
    }

    pub fn regressor(&self) -> &Regressor<HdmrKernelSpec> {
        &self.gp
    }

    pub fn spec(&self) -> &HdmrKernelSpec {
        self.gp.covariance()
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn dim(&self) -> usize {
        self.spec().dim()
    }

    pub fn n_train(&self) -> usize {
        self.gp.inputs().len()
    }

    pub fn delta(&self) -> f64 {
        self.gp.delta()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.gp.log_marginal_likelihood()
    }

    fn scaled_query(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.spec(), x.len())?;
        Ok(self.scaler.scale_point(x))
    }

    /// Mean in original target units.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.scaler.target.invert(self.predict_mean_scaled(x)?))
    }

    /// Mean in scaled-target units, `K*(x) · c`.
    pub fn predict_mean_scaled(&self, x: &[f64]) -> Result<f64> {
        let q = self.scaled_query(x)?;
        self.gp.predict_mean(&q)
    }

    /// Predictive variance in scaled-target units.
    pub fn predict_variance(&self, x: &[f64]) -> Result<f64> {
        let q = self.scaled_query(x)?;
        self.gp.predict_variance(&q)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let q = self.scaled_query(x)?;
        let p = self.gp.predict(&q)?;
        Ok(Prediction {
            mean: self.scaler.target.invert(p.mean),
            variance: p.variance,
        })
    }

    /// Original-unit means for many queries.
    pub fn predict_means(&self, queries: &Points) -> Result<Vec<f64>> {
        check_dim(self.spec(), queries.dim())?;
        let scaled = self.scaler.scale_points(queries);
        Ok(self.scaler.unscale_targets(&self.gp.predict_means(&scaled)?))
    }

    /// Original-unit means with scaled-unit variances for many queries.
    pub fn predict_many(&self, queries: &Points) -> Result<Vec<Prediction>> {
        check_dim(self.spec(), queries.dim())?;
        let scaled = self.scaler.scale_points(queries);
        let mut out = self.gp.predict_many(&scaled)?;
        for p in &mut out {
            p.mean = self.scaler.target.invert(p.mean);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            format_version: MODEL_FORMAT_VERSION,
            dim: self.dim(),
            scaler: self.scaler.clone(),
            spec: self.spec().clone(),
            delta: self.delta(),
            x: self.gp.inputs().clone(),
            f: self.gp.targets().to_vec(),
            c: self.gp.coefficients().to_vec(),
            log_ml: self.log_marginal_likelihood(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_string(&file).map_err(|e| Error::ModelFormat(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    /// Load a model file, refactorize, and verify the stored coefficients.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("not a model file (format `{}`)", file.format)));
        }
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {} (this build reads {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        let m = file.x.len();
        if file.dim != file.spec.dim() || file.x.dim() != file.dim || file.scaler.dim() != file.dim {
            return Err(Error::ModelFormat("inconsistent dimensions".into()));
        }
        if m == 0 || file.f.len() != m || file.c.len() != m {
            return Err(Error::ModelFormat("inconsistent training-set sizes".into()));
        }
        if !(file.delta >= 0.0 && file.delta.is_finite()) {
            return Err(Error::ModelFormat(format!("invalid δ {}", file.delta)));
        }
        let buf = gram_lower(&file.spec, &file.x, file.delta);
        let err = backward_error(&buf, m, &file.c, &file.f);
        if !(err < MODEL_RESIDUAL_TOL) {
            return Err(Error::ModelFormat(format!(
                "stored coefficients do not solve the training system (backward error {err:e}); file is corrupt"
            )));
        }
        let llt = factorize(&buf, m)?;
        drop(buf);
        let log_ml = log_marginal_likelihood_from(&llt, &file.f, &file.c);
        let gp = Regressor {
            cov: file.spec,
            x: file.x,
            f: file.f,
            delta: file.delta,
            llt,
            c: file.c,
            log_ml,
        };
        Ok(Self {
            gp,
            scaler: file.scaler,
            metadata: file.metadata,
        })
    }
}

pub const MODEL_FORMAT: &str = "hdmr-gpr-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    format_version: u32,
    dim: usize,
    scaler: Scaler,
    spec: HdmrKernelSpec,
    delta: f64,
    x: Points,
    f: Vec<f64>,
    c: Vec<f64>,
    log_ml: f64,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}
