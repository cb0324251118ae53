//! Maximum-likelihood length scales (and optionally δ).
//!
//! Parameters are searched in log space with a bounded Nelder–Mead simplex.
//! Restart 0 starts from the hyperparameters passed in; further restarts start
//! from points drawn uniformly in the log-box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{Error, Result};
use crate::gpr::Regressor;
use crate::hdmr_kernel::HdmrKernelSpec;

/// More per-term lengths than this are refused; use a shared length instead.
pub const MAX_PER_TERM_PARAMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizationMode {
    SharedLength,
    PerTermLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Argument(format!("bounds must satisfy 0 < lo < hi < ∞, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    fn log_clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo.ln(), self.hi.ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSpec {
    pub mode: OptimizationMode,
    pub optimize_delta: bool,
    pub length_bounds: Bounds,
    pub delta_bounds: Bounds,
    /// Objective evaluations per restart.
    pub budget: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizationSpec {
    fn default() -> Self {
        Self {
            mode: OptimizationMode::SharedLength,
            optimize_delta: false,
            length_bounds: Bounds { lo: 1e-2, hi: 1e2 },
            delta_bounds: Bounds { lo: 1e-8, hi: 1e-1 },
            budget: 200,
            restarts: 1,
            seed: 0,
        }
    }
}

impl OptimizationSpec {
    fn validate(&self, spec: &HdmrKernelSpec) -> Result<()> {
        Bounds::new(self.length_bounds.lo, self.length_bounds.hi)?;
        Bounds::new(self.delta_bounds.lo, self.delta_bounds.hi)?;
        if self.budget == 0 {
            return Err(Error::Argument("optimization budget must be ≥ 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Argument("need at least one restart".into()));
        }
        if self.mode == OptimizationMode::PerTermLength && spec.n_terms() > MAX_PER_TERM_PARAMS {
            return Err(Error::Argument(format!(
                "per-term optimization of {} lengths is refused (limit {MAX_PER_TERM_PARAMS}); use a shared length",
                spec.n_terms()
            )));
        }
        Ok(())
    }

    fn n_lengths(&self, spec: &HdmrKernelSpec) -> usize {
        match self.mode {
            OptimizationMode::SharedLength => 1,
            OptimizationMode::PerTermLength => spec.n_terms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub restart: usize,
    /// Evaluation index within the restart.
    pub evaluation: usize,
    pub lengths: Vec<f64>,
    pub delta: f64,
    /// `None` when the Gram matrix could not be factorized.
    pub log_ml: Option<f64>,
}

#[derive(Debug)]
pub struct OptimizationResult {
    pub spec: HdmrKernelSpec,
    pub delta: f64,
    pub log_ml: f64,
    pub model: Regressor<HdmrKernelSpec>,
    pub trace: Vec<TraceEntry>,
}

struct Problem<'a> {
    base: &'a HdmrKernelSpec,
    x: &'a Points,
    f: &'a [f64],
    delta: f64,
    opt: &'a OptimizationSpec,
    n_lengths: usize,
    /// Start point in log space and the exact hyperparameters it stands for.
    start: (Vec<f64>, Vec<f64>, f64),
}

impl<'a> Problem<'a> {
    fn new(base: &'a HdmrKernelSpec, x: &'a Points, f: &'a [f64], delta: f64, opt: &'a OptimizationSpec) -> Self {
        let mut p = Problem {
            base,
            x,
            f,
            delta,
            opt,
            n_lengths: opt.n_lengths(base),
            start: (Vec::new(), Vec::new(), delta),
        };
        let terms = base.terms();
        let lengths: Vec<f64> = match opt.mode {
            OptimizationMode::SharedLength if terms.iter().all(|t| t.kernel.length() == terms[0].kernel.length()) => {
                vec![terms[0].kernel.length()]
            }
            OptimizationMode::SharedLength => {
                let s: f64 = terms.iter().map(|t| t.kernel.length().ln()).sum();
                vec![(s / terms.len() as f64).exp()]
            }
            OptimizationMode::PerTermLength => terms.iter().map(|t| t.kernel.length()).collect(),
        };
        let mut theta: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
        if opt.optimize_delta {
            theta.push(delta.max(f64::MIN_POSITIVE).ln());
        }
        let raw = theta.clone();
        p.clamp(&mut theta);
        p.start = if raw == theta {
            (theta, lengths, delta)
        } else {
            let (l, d) = p.decode_raw(&theta);
            (theta, l, d)
        };
        p
    }

    fn decode(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        if theta == self.start.0.as_slice() {
            return (self.start.1.clone(), self.start.2);
        }
        self.decode_raw(theta)
    }

    fn decode_raw(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        let lb = self.opt.length_bounds;
        let lengths = theta[..self.n_lengths].iter().map(|v| v.exp().clamp(lb.lo, lb.hi)).collect();
        let delta = if self.opt.optimize_delta {
            let db = self.opt.delta_bounds;
            theta[self.n_lengths].exp().clamp(db.lo, db.hi)
        } else {
            self.delta
        };
        (lengths, delta)
    }

    fn clamp(&self, theta: &mut [f64]) {
        for v in &mut theta[..self.n_lengths] {
            *v = self.opt.length_bounds.log_clamp(*v);
        }
        if self.opt.optimize_delta {
            theta[self.n_lengths] = self.opt.delta_bounds.log_clamp(theta[self.n_lengths]);
        }
    }

    fn spec_for(&self, lengths: &[f64]) -> Result<HdmrKernelSpec> {
        match self.opt.mode {
            OptimizationMode::SharedLength => self.base.with_shared_length(lengths[0]),
            OptimizationMode::PerTermLength => self.base.with_lengths(lengths),
        }
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = self.opt.length_bounds;
        let mut theta: Vec<f64> = (0..self.n_lengths).map(|_| rng.random_range(b.lo.ln()..=b.hi.ln())).collect();
        if self.opt.optimize_delta {
            let d = self.opt.delta_bounds;
            theta.push(rng.random_range(d.lo.ln()..=d.hi.ln()));
        }
        theta
    }

    fn step(&self) -> Vec<f64> {
        let span = |b: Bounds| (b.hi.ln() - b.lo.ln()) * 0.1;
        let mut s = vec![span(self.opt.length_bounds).min(1.0); self.n_lengths];
        if self.opt.optimize_delta {
            s.push(span(self.opt.delta_bounds).min(2.0));
        }
        s
    }
}

struct Best {
    log_ml: f64,
    lengths: Vec<f64>,
    delta: f64,
    model: Regressor<HdmrKernelSpec>,
}

/// Result of one restart.
struct RestartOutcome {
    best: Option<Best>,
    trace: Vec<TraceEntry>,
    last_error: Option<Error>,
}

fn run_restart(problem: &Problem<'_>, restart: usize, start: Vec<f64>) -> RestartOutcome {
    let mut out = RestartOutcome {
        best: None,
        trace: Vec::new(),
        last_error: None,
    };
    let mut objective = |theta: &[f64]| -> f64 {
        let (lengths, delta) = problem.decode(theta);
        let evaluation = out.trace.len();
        let fitted = problem
            .spec_for(&lengths)
            .and_then(|spec| Regressor::train(spec, problem.x.clone(), problem.f.to_vec(), delta));
        let log_ml = match fitted {
            Ok(model) => {
                let ll = model.log_marginal_likelihood();
                if out.best.as_ref().is_none_or(|b| ll > b.log_ml) {
                    out.best = Some(Best {
                        log_ml: ll,
                        lengths: lengths.clone(),
                        delta,
                        model,
                    });
                }
                Some(ll)
            }
            Err(e) => {
                out.last_error = Some(e);
                None
            }
        };
        out.trace.push(TraceEntry {
            restart,
            evaluation,
            lengths,
            delta,
            log_ml,
        });
        log_ml.map_or(f64::INFINITY, |v| -v)
    };
    let bounds = |theta: &mut [f64]| problem.clamp(theta);
    nelder_mead(&mut objective, bounds, start, &problem.step(), problem.opt.budget);
    out
}

/// Maximize the log marginal likelihood over length scale(s) and optionally δ.
pub fn optimize(
    spec: &HdmrKernelSpec,
    x: &Points,
    f: &[f64],
    delta: f64,
    opt: &OptimizationSpec,
) -> Result<OptimizationResult> {
    opt.validate(spec)?;
    if x.dim() != spec.dim() {
        return Err(Error::Dimension {
            expected: spec.dim(),
            got: x.dim(),
        });
    }
    let problem = Problem::new(spec, x, f, delta, opt);
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut starts = vec![problem.start.0.clone()];
    for _ in 1..opt.restarts {
        starts.push(problem.random_start(&mut rng));
    }
    let outcomes: Vec<RestartOutcome> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, s)| run_restart(&problem, r, s))
        .collect();

    let mut trace = Vec::new();
    let mut best: Option<Best> = None;
    let mut last_error = None;
    for o in outcomes {
        trace.extend(o.trace);
        if let Some(b) = o.best {
            if best.as_ref().is_none_or(|cur| b.log_ml > cur.log_ml) {
                best = Some(b);
            }
        }
        last_error = o.last_error.or(last_error);
    }
    let best = best.ok_or_else(|| {
        Error::Optimization(format!(
            "every objective evaluation failed{}",
            last_error.map(|e| format!(" (last error: {e})")).unwrap_or_default()
        ))
    })?;
    let spec = problem.spec_for(&best.lengths)?;
    Ok(OptimizationResult {
        spec,
        delta: best.delta,
        log_ml: best.log_ml,
        model: best.model,
        trace,
    })
}

/// Minimize `objective` with a Nelder–Mead simplex, projecting every trial
/// point through `project`. Stops after `budget` evaluations or once the
/// simplex has collapsed. Returns the best point and value seen.
pub fn nelder_mead<F, P>(objective: &mut F, project: P, start: Vec<f64>, step: &[f64], budget: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    const F_TOL: f64 = 1e-10;
    const X_TOL: f64 = 1e-8;

    let n = start.len();
    let mut evals = 0usize;
    let mut eval = |p: &mut Vec<f64>, evals: &mut usize| -> f64 {
        project(p);
        *evals += 1;
        let v = objective(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x0 = start;
    let f0 = eval(&mut x0, &mut evals);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), f0)];
    for i in 0..n {
        if evals >= budget {
            break;
        }
        let mut p = x0.clone();
        p[i] += step[i];
        let before = p[i];
        project(&mut p);
        if p[i] == x0[i] || p[i] != before {
            // hit a bound: step the other way
            p[i] = x0[i] - step[i];
        }
        let v = eval(&mut p, &mut evals);
        simplex.push((p, v));
    }
    let best_of = |s: &[(Vec<f64>, f64)]| {
        s.iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, v)| (p.clone(), *v))
            .expect("non-empty simplex")
    };
    if simplex.len() < n + 1 {
        return best_of(&simplex);
    }

    while evals < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        let spread = simplex
            .iter()
            .skip(1)
            .flat_map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if fb.is_finite() && (fw - fb).abs() <= F_TOL * (1.0 + fb.abs()) && spread <= X_TOL {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let mut xr = along(ALPHA);
        let fr = eval(&mut xr, &mut evals);
        if fr < simplex[0].1 {
            if evals >= budget {
                simplex[n] = (xr, fr);
                break;
            }
            let mut xe = along(GAMMA);
            let fe = eval(&mut xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        if evals >= budget {
            break;
        }
        let (mut xc, fc);
        if fr < simplex[n].1 {
            xc = along(RHO * ALPHA);
            fc = eval(&mut xc, &mut evals);
            if fc <= fr {
                simplex[n] = (xc, fc);
                continue;
            }
        } else {
            xc = along(-RHO);
            fc = eval(&mut xc, &mut evals);
            if fc < simplex[n].1 {
                simplex[n] = (xc, fc);
                continue;
            }
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evals >= budget {
                break;
            }
            let mut p: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + SIGMA * (v - b)).collect();
            let v = eval(&mut p, &mut evals);
            *vertex = (p, v);
        }
    }
    best_of(&simplex)
}
