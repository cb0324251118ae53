//! Matérn-family covariance functions.
//!
//! Only the four closed-form members are representable: the exponential
//! (ν = 1/2), Matérn 3/2, Matérn 5/2 and the squared exponential (ν → ∞).
//! Every kernel has unit self-covariance; amplitudes are attached one level
//! up, by the HDMR kernel terms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdmr_kernel::SubsetIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "exp")]
    Exponential,
    #[serde(rename = "matern32")]
    Matern32,
    #[serde(rename = "matern52")]
    Matern52,
    #[serde(rename = "se")]
    SquaredExponential,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Exponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
        KernelFamily::SquaredExponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exp",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::SquaredExponential => "se",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" => Ok(KernelFamily::SquaredExponential),
            "exp" => Ok(KernelFamily::Exponential),
            "matern32" => Ok(KernelFamily::Matern32),
            "matern52" => Ok(KernelFamily::Matern52),
            other => Err(Error::Argument(format!(
                "unknown kernel family `{other}` (expected se | exp | matern32 | matern52)"
            ))),
        }
    }
}

/// A unit-amplitude isotropic Matérn kernel with length scale `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBaseKernel")]
pub struct BaseKernel {
    family: KernelFamily,
    length: f64,
}

#[derive(Deserialize)]
struct RawBaseKernel {
    family: KernelFamily,
    length: f64,
}

impl TryFrom<RawBaseKernel> for BaseKernel {
    type Error = Error;

    fn try_from(raw: RawBaseKernel) -> Result<Self> {
        BaseKernel::new(raw.family, raw.length)
    }
}

impl BaseKernel {
    pub fn new(family: KernelFamily, length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Argument(format!(
                "length scale must be positive and finite, got {length}"
            )));
        }
        Ok(Self { family, length })
    }

    pub fn squared_exponential(length: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, length)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(self.family, length)
    }

    /// Kernel value at distance `r`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::Domain(format!("distance must be finite, got {r}")));
        }
        if r < 0.0 {
            return Err(Error::Domain(format!("distance must be nonnegative, got {r}")));
        }
        Ok(self.eval_sq(r * r))
    }

    /// Kernel value from a squared distance. No validation; underflow yields 0.
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        let l = self.length;
        match self.family {
            KernelFamily::SquaredExponential => (-r2 / (2.0 * l * l)).exp(),
            KernelFamily::Exponential => (-r2.sqrt() / l).exp(),
            KernelFamily::Matern32 => {
                let s = 3f64.sqrt() * r2.sqrt() / l;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * r2.sqrt() / l;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Kernel value on the coordinates of `subset` only.
    pub fn eval_on_subset(&self, subset: &SubsetIndex, x: &[f64], y: &[f64]) -> Result<f64> {
        let max = subset.max_index();
        for p in [x, y] {
            if max >= p.len() {
                return Err(Error::Dimension {
                    expected: max + 1,
                    got: p.len(),
                });
            }
        }
        Ok(self.eval_sq(sq_dist_subset(subset.indices(), x, y)))
    }
}

/// Squared Euclidean distance over all coordinates.
#[inline]
pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// Squared Euclidean distance restricted to `indices`.
#[inline]
pub fn sq_dist_subset(indices: &[usize], x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &i in indices {
        let d = x[i] - y[i];
        acc += d * d;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn se(l: f64) -> BaseKernel {
        BaseKernel::squared_exponential(l).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let e_inv = (-1f64).exp();
        assert_eq!(se(1.0).eval(0.0).unwrap(), 1.0);
        assert_relative_eq!(se(1.0).eval(2f64.sqrt()).unwrap(), e_inv, max_relative = 1e-15);
        let exp2 = BaseKernel::new(KernelFamily::Exponential, 2.0).unwrap();
        assert_relative_eq!(exp2.eval(2.0).unwrap(), e_inv, max_relative = 1e-15);
        // (1 + √3)·exp(−√3), evaluated at 50 digits: 0.483357724596507650...
        let m32 = BaseKernel::new(KernelFamily::Matern32, 1.0).unwrap();
        assert_relative_eq!(m32.eval(1.0).unwrap(), 0.483_357_724_596_507_7, max_relative = 1e-14);
    }

    #[test]
    fn unit_self_covariance_every_family() {
        for fam in KernelFamily::ALL {
            let k = BaseKernel::new(fam, 0.7).unwrap();
            assert_eq!(k.eval(0.0).unwrap(), 1.0, "{fam}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(se(1.0).eval(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(se(1.0).eval(f64::INFINITY), Err(Error::Domain(_))));
        assert!(BaseKernel::squared_exponential(0.0).is_err());
        assert!(BaseKernel::squared_exponential(-1.0).is_err());
        assert!("gauss".parse::<KernelFamily>().is_err());
        assert_eq!("Matern52".parse::<KernelFamily>().unwrap(), KernelFamily::Matern52);
    }

    #[test]
    fn underflow_is_zero() {
        for fam in KernelFamily::ALL {
            let k = BaseKernel::new(fam, 1e-3).unwrap();
            assert_eq!(k.eval(1e6).unwrap(), 0.0);
        }
    }

    #[test]
    fn subset_ignores_other_coordinates() {
        let s = SubsetIndex::new(vec![0]).unwrap();
        let v = se(1.0).eval_on_subset(&s, &[0.0, 9.0], &[2f64.sqrt(), 9.0]).unwrap();
        assert_relative_eq!(v, (-1f64).exp(), max_relative = 1e-15);
        let s01 = SubsetIndex::new(vec![0, 1]).unwrap();
        assert_eq!(se(1.0).eval_on_subset(&s01, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn subset_index_out_of_range() {
        let s = SubsetIndex::new(vec![0, 3]).unwrap();
        let err = se(1.0).eval_on_subset(&s, &[0.0; 4], &[0.0; 2]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 4, got: 2 }));
    }

    #[test]
    fn se_factorizes_over_coordinates() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let k = se(1.22);
        let subsets = [vec![2], vec![0, 2], vec![0, 1, 2, 3]];
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            for idx in &subsets {
                let s = SubsetIndex::new(idx.clone()).unwrap();
                let joint = k.eval_on_subset(&s, &x, &y).unwrap();
                let product: f64 = idx.iter().map(|&i| k.eval((x[i] - y[i]).abs()).unwrap()).product();
                assert_relative_eq!(joint, product, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn gram_is_numerically_psd() {
        use nalgebra::DMatrix;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for fam in KernelFamily::ALL {
            let k = BaseKernel::new(fam, 0.4).unwrap();
            let pts: Vec<[f64; 3]> = (0..20).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let g = DMatrix::from_fn(20, 20, |i, j| k.eval_sq(sq_dist(&pts[i], &pts[j])));
            let min = g.symmetric_eigenvalues().min();
            assert!(min > -1e-10, "{fam}: min eigenvalue {min}");
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_monotone(
            fam in prop::sample::select(KernelFamily::ALL.to_vec()),
            l in 0.05f64..20.0,
            r1 in 0.0f64..5.0,
            dr in 1e-3f64..5.0,
            x in prop::collection::vec(-3.0f64..3.0, 3),
            y in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let k = BaseKernel::new(fam, l).unwrap();
            let s = SubsetIndex::new(vec![0, 1, 2]).unwrap();
            prop_assert_eq!(k.eval_on_subset(&s, &x, &y).unwrap(), k.eval_on_subset(&s, &y, &x).unwrap());
            let a = k.eval(r1).unwrap();
            let b = k.eval(r1 + dr).unwrap();
            prop_assert!(a >= b);
            if b > 1e-300 && a < 1.0 {
                prop_assert!(a > b);
            }
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
