//! Synthetic regression targets with known structure.
//!
//! Inputs are drawn uniformly in `[lo, hi]^D`; the closed-form targets are
//! written in terms of `u = (x − lo) / (hi − lo) ∈ [0, 1]`.
//!
//! - `additive-1d`: `Σ_i w_i g_i(u_i)`, first-order only.
//! - `coupled-2d`: half the additive part plus `1.5 sin(2πu_a) sin(2πu_b)` for each coupled pair.
//! - `full-d`: `∏_i (1 + ½ cos(πu_i))`, with interactions at every order up to D.
//! - `gp-sample`: one draw from a zero-mean squared-exponential GP.
//!
//! Variables listed as dummies never enter the target.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::Llt;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::kernels::{sq_dist, BaseKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthFamily {
    #[serde(rename = "additive-1d")]
    Additive1d,
    #[serde(rename = "coupled-2d")]
    Coupled2d,
    #[serde(rename = "full-d")]
    FullD,
    #[serde(rename = "gp-sample")]
    GpSample,
}

impl SynthFamily {
    pub fn name(self) -> &'static str {
        match self {
            SynthFamily::Additive1d => "additive-1d",
            SynthFamily::Coupled2d => "coupled-2d",
            SynthFamily::FullD => "full-d",
            SynthFamily::GpSample => "gp-sample",
        }
    }
}

impl fmt::Display for SynthFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "additive-1d" => Ok(SynthFamily::Additive1d),
            "coupled-2d" => Ok(SynthFamily::Coupled2d),
            "full-d" => Ok(SynthFamily::FullD),
            "gp-sample" => Ok(SynthFamily::GpSample),
            other => Err(Error::Argument(format!(
                "unknown generator `{other}` (expected additive-1d | coupled-2d | full-d | gp-sample)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub family: SynthFamily,
    pub dim: usize,
    pub m: usize,
    /// Standard deviation of Gaussian noise added to the targets.
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub dummies: Vec<usize>,
    /// Coupled variable pairs for `coupled-2d`; defaults to `(0, 1)`.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
    #[serde(default = "default_domain")]
    pub domain: (f64, f64),
    /// Length scale of the `gp-sample` kernel, in raw coordinates.
    #[serde(default = "default_gp_length")]
    pub gp_length: f64,
}

fn default_domain() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_gp_length() -> f64 {
    0.5
}

impl SynthSpec {
    pub fn new(family: SynthFamily, dim: usize, m: usize, seed: u64) -> Self {
        Self {
            family,
            dim,
            m,
            noise: 0.0,
            seed,
            dummies: Vec::new(),
            pairs: Vec::new(),
            domain: default_domain(),
            gp_length: default_gp_length(),
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_dummies(mut self, dummies: Vec<usize>) -> Self {
        self.dummies = dummies;
        self
    }

    pub fn with_pairs(mut self, pairs: Vec<(usize, usize)>) -> Self {
        self.pairs = pairs;
        self
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }

    pub fn with_gp_length(mut self, l: f64) -> Self {
        self.gp_length = l;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.m == 0 {
            return Err(Error::Argument("generator needs D ≥ 1 and M ≥ 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Argument(format!("noise must be ≥ 0, got {}", self.noise)));
        }
        let (lo, hi) = self.domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Argument(format!("invalid domain [{lo}, {hi}]")));
        }
        if let Some(&j) = self.dummies.iter().find(|&&j| j >= self.dim) {
            return Err(Error::Argument(format!("dummy variable {j} is outside 0..{}", self.dim)));
        }
        for &(a, b) in &self.pairs {
            if a >= self.dim || b >= self.dim || a == b {
                return Err(Error::Argument(format!("invalid coupled pair ({a}, {b})")));
            }
        }
        if self.family == SynthFamily::Coupled2d && self.pairs.is_empty() && self.dim < 2 {
            return Err(Error::Argument("coupled-2d needs D ≥ 2".into()));
        }
        if self.family == SynthFamily::GpSample && !(self.gp_length > 0.0 && self.gp_length.is_finite()) {
            return Err(Error::Argument(format!("invalid gp-sample length {}", self.gp_length)));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "{}(D={},M={},noise={},seed={}",
            self.family, self.dim, self.m, self.noise, self.seed
        );
        if !self.dummies.is_empty() {
            s.push_str(&format!(",dummies={:?}", self.dummies));
        }
        if self.family == SynthFamily::Coupled2d {
            s.push_str(&format!(",pairs={:?}", self.coupled_pairs()));
        }
        if self.domain != default_domain() {
            s.push_str(&format!(",domain=[{},{}]", self.domain.0, self.domain.1));
        }
        if self.family == SynthFamily::GpSample {
            s.push_str(&format!(",l={}", self.gp_length));
        }
        s.push(')');
        s
    }

    fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        if self.pairs.is_empty() {
            vec![(0, 1)]
        } else {
            self.pairs.clone()
        }
    }

    fn active(&self, i: usize) -> bool {
        !self.dummies.contains(&i)
    }

    /// Noise-free target at `x`; `None` for `gp-sample`, which has no closed form.
    pub fn evaluate(&self, x: &[f64]) -> Option<f64> {
        let (lo, hi) = self.domain;
        let u = |i: usize| (x[i] - lo) / (hi - lo);
        let additive = || -> f64 {
            (0..self.dim)
                .filter(|&i| self.active(i))
                .map(|i| shape(i, u(i)) / (1.0 + 0.3 * i as f64))
                .sum()
        };
        match self.family {
            SynthFamily::Additive1d => Some(additive()),
            SynthFamily::Coupled2d => {
                let pairs: f64 = self
                    .coupled_pairs()
                    .iter()
                    .filter(|(a, b)| self.active(*a) && self.active(*b))
                    .map(|&(a, b)| 1.5 * (2.0 * PI * u(a)).sin() * (2.0 * PI * u(b)).sin())
                    .sum();
                Some(0.5 * additive() + pairs)
            }
            SynthFamily::FullD => Some(
                (0..self.dim)
                    .filter(|&i| self.active(i))
                    .map(|i| 1.0 + 0.5 * (PI * u(i)).cos())
                    .product(),
            ),
            SynthFamily::GpSample => None,
        }
    }

    pub fn generate(&self) -> Result<SynthData> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = self.domain;
        let xs: Vec<f64> = (0..self.m * self.dim).map(|_| rng.random_range(lo..hi)).collect();
        let x = Points::new(self.dim, xs)?;
        let truth = match self.family {
            SynthFamily::GpSample => gp_draw(&x, self.gp_length, &mut rng)?,
            _ => x.rows().map(|r| self.evaluate(r).expect("closed form")).collect(),
        };
        let y: Vec<f64> = truth
            .iter()
            .map(|t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                t + self.noise * z
            })
            .collect();
        let mut dataset = Dataset::new(x, y, self.describe())?;
        let mut names: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        names.push("y".into());
        dataset.column_names = Some(names);
        Ok(SynthData { dataset, truth })
    }
}

/// One-dimensional building blocks on `[0, 1]`.
fn shape(i: usize, u: f64) -> f64 {
    match i % 4 {
        0 => (2.0 * PI * u).sin(),
        1 => 4.0 * (u - 0.5) * (u - 0.5),
        2 => (-3.0 * u).exp(),
        _ => 0.5 * (3.0 * PI * u).cos(),
    }
}

fn gp_draw(x: &Points, length: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let kernel = BaseKernel::squared_exponential(length)?;
    let m = x.len();
    let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
    let mut jitter = 1e-10;
    loop {
        let k = Mat::from_fn(m, m, |i, j| {
            kernel.eval_sq(sq_dist(x.row(i), x.row(j))) + if i == j { jitter } else { 0.0 }
        });
        match Llt::new(k.as_ref(), Side::Lower) {
            Ok(llt) => {
                let l = llt.L();
                return Ok((0..m).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect());
            }
            Err(_) if jitter < 1e-4 => jitter *= 10.0,
            Err(_) => return Err(Error::Argument("could not factorize the gp-sample covariance".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    /// Noise-free target values at the dataset's inputs.
    pub truth: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset_to_csv;

    #[test]
    fn generation_is_reproducible() {
        let spec = SynthSpec::new(SynthFamily::Additive1d, 4, 300, 17).with_noise(0.01);
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(dataset_to_csv(&a.dataset, Some(&a.truth)), dataset_to_csv(&b.dataset, Some(&b.truth)));
        let c = SynthSpec { seed: 18, ..spec }.generate().unwrap();
        assert_ne!(a.dataset.y, c.dataset.y);
    }

    #[test]
    fn truth_matches_closed_form_and_noise() {
        for family in [SynthFamily::Additive1d, SynthFamily::Coupled2d, SynthFamily::FullD] {
            let spec = SynthSpec::new(family, 3, 50, 1);
            let d = spec.generate().unwrap();
            for (i, row) in d.dataset.x.rows().enumerate() {
                assert_eq!(d.truth[i], spec.evaluate(row).unwrap());
                assert_eq!(d.dataset.y[i], d.truth[i]);
            }
        }
        let noisy = SynthSpec::new(SynthFamily::Additive1d, 3, 2000, 1).with_noise(0.1).generate().unwrap();
        let resid: Vec<f64> = noisy.dataset.y.iter().zip(&noisy.truth).map(|(y, t)| y - t).collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.01, "{sd}");
    }

    #[test]
    fn dummies_do_not_affect_target() {
        let spec = SynthSpec::new(SynthFamily::Additive1d, 3, 1, 0).with_dummies(vec![1]);
        let a = spec.evaluate(&[0.2, 0.1, 0.7]).unwrap();
        let b = spec.evaluate(&[0.2, 0.9, 0.7]).unwrap();
        assert_eq!(a, b);
        let full = SynthSpec::new(SynthFamily::FullD, 3, 1, 0).with_dummies(vec![0]);
        assert_eq!(full.evaluate(&[0.0, 0.3, 0.4]), full.evaluate(&[1.0, 0.3, 0.4]));
    }

    #[test]
    fn coupled_pair_is_a_pure_interaction() {
        let spec = SynthSpec::new(SynthFamily::Coupled2d, 2, 1, 0);
        let base = 0.5 * (shape(0, 0.25) + shape(1, 0.25) / 1.3);
        assert!((spec.evaluate(&[0.25, 0.25]).unwrap() - (base + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn gp_sample_has_domain_and_no_closed_form() {
        let spec = SynthSpec::new(SynthFamily::GpSample, 1, 100, 3).with_domain(0.0, 10.0);
        let d = spec.generate().unwrap();
        assert!(d.dataset.x.as_slice().iter().all(|&v| (0.0..10.0).contains(&v)));
        assert!(spec.evaluate(&[1.0]).is_none());
        let sd = (d.truth.iter().map(|v| v * v).sum::<f64>() / 100.0).sqrt();
        assert!(sd > 0.2 && sd < 3.0, "{sd}");
    }

    #[test]
    fn invalid_descriptors() {
        assert!("spiral".parse::<SynthFamily>().is_err());
        assert!(SynthSpec::new(SynthFamily::Additive1d, 0, 10, 0).generate().is_err());
        assert!(SynthSpec::new(SynthFamily::Additive1d, 2, 10, 0).with_dummies(vec![5]).generate().is_err());
        assert!(SynthSpec::new(SynthFamily::Coupled2d, 3, 10, 0).with_pairs(vec![(1, 1)]).generate().is_err());
        assert!(SynthSpec::new(SynthFamily::Coupled2d, 1, 10, 0).generate().is_err());
    }
}
