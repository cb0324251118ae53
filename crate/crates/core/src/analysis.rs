//! Component functions of a trained additive-kernel model.
//!
//! Each kernel term `S` induces `f_S(x) = Σ_n A_S k_S(x_S, x_S⁽ⁿ⁾) c_n`, and the
//! components sum to the scaled predictive mean. At the training points the
//! components sum to `(K + δI)c − δc = f − δc`: the jitter belongs to no
//! component. Variances are population (1/M) variances in scaled-target units.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::dot::Dot2;
use crate::gpr::TrainedModel;
use crate::hdmr_kernel::SubsetIndex;

/// Value of the component for `subset` at `x` (original coordinates, scaled-target units).
pub fn component_value(model: &TrainedModel, subset: &SubsetIndex, x: &[f64]) -> Result<f64> {
    let term = model
        .spec()
        .term_index(subset)
        .ok_or_else(|| Error::Argument(format!("subset {subset} is not a term of the model")))?;
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let q = model.scaler().scale_point(x);
    Ok(term_value_scaled(model, term, &q))
}

/// Values of every component at `x`, in spec term order.
pub fn component_values(model: &TrainedModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let q = model.scaler().scale_point(x);
    Ok((0..model.spec().n_terms())
        .map(|t| term_value_scaled(model, t, &q))
        .collect())
}

fn term_value_scaled(model: &TrainedModel, term: usize, q: &[f64]) -> f64 {
    let gp = model.regressor();
    let spec = model.spec();
    let x = gp.inputs();
    let mut acc = Dot2::default();
    for (n, &cn) in gp.coefficients().iter().enumerate() {
        acc.add(spec.eval_term_unchecked(term, q, x.row(n)), cn);
    }
    acc.value()
}

/// `f_S = K_S c` at every training point, one vector per term (spec order).
pub fn training_components(model: &TrainedModel) -> Vec<Vec<f64>> {
    let gp = model.regressor();
    let spec = model.spec();
    let x = gp.inputs();
    let c = gp.coefficients();
    let m = x.len();
    (0..spec.n_terms())
        .into_par_iter()
        .map(|t| {
            let mut out = vec![0.0; m];
            for i in 0..m {
                let xi = x.row(i);
                out[i] += spec.eval_term_unchecked(t, xi, xi) * c[i];
                for j in i + 1..m {
                    let k = spec.eval_term_unchecked(t, xi, x.row(j));
                    out[i] += k * c[j];
                    out[j] += k * c[i];
                }
            }
            out
        })
        .collect()
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentEntry {
    pub subset: SubsetIndex,
    pub variance: f64,
    /// Fraction of the summed component variances.
    pub share: f64,
    pub amplitude: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    /// Sorted by variance (descending), ties broken by subset order.
    pub entries: Vec<ComponentEntry>,
    /// Sum of component variances.
    pub total_variance: f64,
    /// Variance over the training set of the summed components.
    pub prediction_variance: f64,
    /// The fitted function is flat over the training set, so shares carry no ranking information.
    pub uniform_zero: bool,
}

impl ComponentReport {
    pub fn rank_of(&self, subset: &SubsetIndex) -> Option<usize> {
        self.entries.iter().position(|e| &e.subset == subset)
    }

    pub fn entry(&self, subset: &SubsetIndex) -> Option<&ComponentEntry> {
        self.entries.iter().find(|e| &e.subset == subset)
    }
}

pub fn component_report(model: &TrainedModel) -> ComponentReport {
    let comps = training_components(model);
    report_from_components(model, &comps)
}

fn report_from_components(model: &TrainedModel, comps: &[Vec<f64>]) -> ComponentReport {
    let spec = model.spec();
    let variances: Vec<f64> = comps.iter().map(|v| population_variance(v)).collect();
    let total: f64 = variances.iter().sum();
    let m = model.n_train();
    let summed: Vec<f64> = (0..m).map(|i| comps.iter().map(|v| v[i]).sum()).collect();
    let prediction_variance = population_variance(&summed);
    let uniform_zero = total == 0.0 || prediction_variance <= 1e-10 * total;

    let mut entries: Vec<ComponentEntry> = spec
        .terms()
        .iter()
        .zip(&variances)
        .map(|(t, &variance)| ComponentEntry {
            subset: t.subset.clone(),
            variance,
            share: if total > 0.0 { variance / total } else { 0.0 },
            amplitude: t.amplitude,
            length: t.kernel.length(),
        })
        .collect();
    entries.sort_by(|a, b| b.variance.total_cmp(&a.variance).then_with(|| a.subset.cmp(&b.subset)));
    ComponentReport {
        entries,
        total_variance: total,
        prediction_variance,
        uniform_zero,
    }
}

/// One grid point of a component curve or surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    /// Coordinates of the subset variables, scaled.
    pub scaled: Vec<f64>,
    /// The same coordinates in original units.
    pub original: Vec<f64>,
    pub value: f64,
}

/// Component values on a regular grid spanning the training range of the
/// subset's variables. Only 1- and 2-variable components can be gridded.
pub fn component_grid(model: &TrainedModel, subset: &SubsetIndex, resolution: usize) -> Result<Vec<GridPoint>> {
    let term = model
        .spec()
        .term_index(subset)
        .ok_or_else(|| Error::Argument(format!("subset {subset} is not a term of the model")))?;
    if subset.len() > 2 {
        return Err(Error::Argument(format!("cannot grid the {}-variable component {subset}", subset.len())));
    }
    if resolution < 2 {
        return Err(Error::Argument("grid resolution must be at least 2".into()));
    }
    let x = model.regressor().inputs();
    let axes: Vec<Vec<f64>> = subset
        .indices()
        .iter()
        .map(|&i| {
            let (lo, hi) = x
                .rows()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[i]), hi.max(r[i])));
            (0..resolution)
                .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
                .collect()
        })
        .collect();
    let mut nodes: Vec<Vec<f64>> = axes[0].iter().map(|&v| vec![v]).collect();
    if let Some(second) = axes.get(1) {
        nodes = nodes
            .into_iter()
            .flat_map(|n| second.iter().map(move |&v| vec![n[0], v]))
            .collect();
    }
    let scaler = model.scaler();
    Ok(nodes
        .into_par_iter()
        .map(|coords| {
            let mut q = vec![0.0; model.dim()];
            for (&i, &v) in subset.indices().iter().zip(&coords) {
                q[i] = v;
            }
            let original = subset
                .indices()
                .iter()
                .zip(&coords)
                .map(|(&i, &v)| scaler.inputs[i].invert(v))
                .collect();
            GridPoint {
                value: term_value_scaled(model, term, &q),
                scaled: coords,
                original,
            }
        })
        .collect())
}
