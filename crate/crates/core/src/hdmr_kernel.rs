//! Additive kernels over variable subsets.
//!
//! A [`HdmrKernelSpec`] is a sum `k(x, x') = Σ_S A_S k_S(x_S, x'_S)` over a list
//! of terms, each a unit Matérn kernel restricted to the coordinates in `S`.
//! When every `d`-subset of `D` variables is present with one shared
//! squared-exponential kernel and one shared amplitude, the sum factorizes as
//! `A · e_d(z_1, …, z_D)` with `z_i = exp(−(x_i − x'_i)² / 2l²)`, which is
//! evaluated in `O(D·d)` instead of `O(C(D, d)·d)`.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dot::Dot2;
use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, KernelFamily};

/// Points with at most this many coordinates are evaluated with stack scratch space.
const STACK_DIM: usize = 64;

/// Strictly increasing, non-empty list of variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SubsetIndex(Vec<usize>);

impl SubsetIndex {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Argument("subset must not be empty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!(
                "subset indices must be strictly increasing, got {indices:?}"
            )));
        }
        Ok(Self(indices))
    }

    pub fn full(dim: usize) -> Result<Self> {
        Self::new((0..dim).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_index(&self) -> usize {
        *self.0.last().expect("non-empty")
    }

    /// Space-separated indices, the form used in CSV output.
    pub fn to_csv_field(&self) -> String {
        self.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse_csv_field(s: &str) -> Result<Self> {
        let idx = s
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::Argument(format!("bad subset index `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(idx)
    }
}

impl TryFrom<Vec<usize>> for SubsetIndex {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SubsetIndex> for Vec<usize> {
    fn from(s: SubsetIndex) -> Self {
        s.0
    }
}

impl fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All `C(dim, order)` subsets of `order` variables, in lexicographic order.
pub fn all_subsets(dim: usize, order: usize) -> Result<Vec<SubsetIndex>> {
    if order == 0 || order > dim {
        return Err(Error::Argument(format!(
            "subset order must satisfy 1 ≤ d ≤ D, got d = {order}, D = {dim}"
        )));
    }
    let count = binomial(dim, order);
    if count > 50_000_000 {
        return Err(Error::Argument(format!("C({dim}, {order}) = {count} terms is too many")));
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut cur: Vec<usize> = (0..order).collect();
    loop {
        out.push(SubsetIndex(cur.clone()));
        // rightmost position that can still advance
        let Some(pos) = (0..order).rev().find(|&p| cur[p] < dim - order + p) else {
            break;
        };
        cur[pos] += 1;
        for q in pos + 1..order {
            cur[q] = cur[q - 1] + 1;
        }
    }
    Ok(out)
}

/// `e_order(z)`: sum over all `order`-subsets of the products of their elements.
///
/// Uses the recurrence `e_k ← e_k + z_i · e_{k−1}` over the inputs. For
/// nonnegative inputs every update is an addition of nonnegative numbers.
pub fn elementary_symmetric(z: &[f64], order: usize) -> f64 {
    if order > z.len() {
        return 0.0;
    }
    let mut stack = [0.0; STACK_DIM + 1];
    let mut heap;
    let e: &mut [f64] = if order <= STACK_DIM {
        &mut stack[..=order]
    } else {
        heap = vec![0.0; order + 1];
        &mut heap
    };
    e[0] = 1.0;
    for (i, &zi) in z.iter().enumerate() {
        let top = order.min(i + 1);
        for k in (1..=top).rev() {
            e[k] += zi * e[k - 1];
        }
    }
    e[order]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub subset: SubsetIndex,
    pub amplitude: f64,
    pub kernel: BaseKernel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FastPath {
    order: usize,
    amplitude: f64,
    /// 1 / (2 l²)
    inv_two_l2: f64,
}

/// Additive kernel specification over `dim` input variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct HdmrKernelSpec {
    dim: usize,
    terms: Vec<Term>,
    fast: Option<FastPath>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    dim: usize,
    terms: Vec<Term>,
}

impl TryFrom<RawSpec> for HdmrKernelSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        HdmrKernelSpec::new(raw.dim, raw.terms)
    }
}

impl From<HdmrKernelSpec> for RawSpec {
    fn from(s: HdmrKernelSpec) -> Self {
        RawSpec {
            dim: s.dim,
            terms: s.terms,
        }
    }
}

impl HdmrKernelSpec {
    pub fn new(dim: usize, terms: Vec<Term>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("input dimension must be ≥ 1".into()));
        }
        if terms.is_empty() {
            return Err(Error::Argument("kernel needs at least one term".into()));
        }
        let mut seen = HashSet::with_capacity(terms.len());
        for t in &terms {
            if t.subset.max_index() >= dim {
                return Err(Error::Argument(format!(
                    "subset {} has an index outside 0..{dim}",
                    t.subset
                )));
            }
            if !(t.amplitude.is_finite() && t.amplitude > 0.0) {
                return Err(Error::Argument(format!(
                    "amplitude of term {} must be positive, got {}",
                    t.subset, t.amplitude
                )));
            }
            if !seen.insert(&t.subset) {
                return Err(Error::Argument(format!("duplicate subset {}", t.subset)));
            }
        }
        let fast = detect_fast_path(dim, &terms);
        Ok(Self { dim, terms, fast })
    }

    /// Every `order`-subset of `dim` variables with amplitude `1 / C(dim, order)`.
    pub fn uniform(dim: usize, order: usize, kernel: BaseKernel) -> Result<Self> {
        let subsets = all_subsets(dim, order)?;
        let amplitude = 1.0 / subsets.len() as f64;
        let terms = subsets
            .into_iter()
            .map(|subset| Term {
                subset,
                amplitude,
                kernel,
            })
            .collect();
        Self::new(dim, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// True when all terms share one subset size, cover all subsets of that
    /// size, and share one squared-exponential kernel and one amplitude.
    pub fn fast_path_ok(&self) -> bool {
        self.fast.is_some()
    }

    /// Subset size if all terms have the same one.
    pub fn order(&self) -> Option<usize> {
        let d = self.terms[0].subset.len();
        self.terms.iter().all(|t| t.subset.len() == d).then_some(d)
    }

    /// `k(x, x) = Σ A_S`.
    pub fn total_amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude).sum()
    }

    pub fn term_index(&self, subset: &SubsetIndex) -> Option<usize> {
        self.terms.iter().position(|t| &t.subset == subset)
    }

    pub fn with_amplitudes(&self, amplitudes: &[f64]) -> Result<Self> {
        if amplitudes.len() != self.terms.len() {
            return Err(Error::Dimension {
                expected: self.terms.len(),
                got: amplitudes.len(),
            });
        }
        let terms = self
            .terms
            .iter()
            .zip(amplitudes)
            .map(|(t, &a)| Term { amplitude: a, ..t.clone() })
            .collect();
        Self::new(self.dim, terms)
    }

    /// Amplitudes drawn independently and uniformly from `[lo, hi]`.
    pub fn with_random_amplitudes(&self, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Argument(format!("random amplitude range must satisfy 0 < lo ≤ hi, got [{lo}, {hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<f64> = self.terms.iter().map(|_| rng.random_range(lo..=hi)).collect();
        self.with_amplitudes(&amps)
    }

    /// All amplitudes multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let amps: Vec<f64> = self.terms.iter().map(|t| t.amplitude * s).collect();
        self.with_amplitudes(&amps)
    }

    /// One shared length scale for every term.
    pub fn with_shared_length(&self, length: f64) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| Ok(Term { kernel: t.kernel.with_length(length)?, ..t.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, terms)
    }

    pub fn with_lengths(&self, lengths: &[f64]) -> Result<Self> {
        if lengths.len() != self.terms.len() {
            return Err(Error::Dimension {
                expected: self.terms.len(),
                got: lengths.len(),
            });
        }
        let terms = self
            .terms
            .iter()
            .zip(lengths)
            .map(|(t, &l)| Ok(Term { kernel: t.kernel.with_length(l)?, ..t.clone() }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, terms)
    }

    pub fn without_term(&self, index: usize) -> Result<Self> {
        let mut terms = self.terms.clone();
        if index >= terms.len() {
            return Err(Error::Argument(format!("no term {index}")));
        }
        terms.remove(index);
        Self::new(self.dim, terms)
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        for p in [x, y] {
            if p.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    got: p.len(),
                });
            }
        }
        Ok(())
    }

    /// Term-by-term sum `Σ_S A_S k_S(x_S, x'_S)`.
    pub fn eval_hdmr(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x, y)?;
        Ok(self.eval_naive_unchecked(x, y))
    }

    /// Factorized evaluation; requires [`fast_path_ok`](Self::fast_path_ok).
    pub fn eval_hdmr_fast(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let fast = self.fast.ok_or_else(|| {
            Error::Precondition("fast path requires a uniform squared-exponential spec".into())
        })?;
        self.check_dims(x, y)?;
        Ok(eval_fast_unchecked(fast, x, y))
    }

    /// Kernel value using whichever evaluation applies. Single-term specs always
    /// go through the term-by-term path so that `d = D` reproduces a plain kernel.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.fast {
            Some(fast) if self.terms.len() > 1 => eval_fast_unchecked(fast, x, y),
            _ => self.eval_naive_unchecked(x, y),
        }
    }

    /// Value of term `index` alone, `A_S k_S(x_S, x'_S)`.
    #[inline]
    pub fn eval_term_unchecked(&self, index: usize, x: &[f64], y: &[f64]) -> f64 {
        let t = &self.terms[index];
        t.amplitude * t.kernel.eval_sq(crate::kernels::sq_dist_subset(t.subset.indices(), x, y))
    }

    fn eval_naive_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut stack = [0.0; STACK_DIM];
        let mut heap;
        let sq: &mut [f64] = if self.dim <= STACK_DIM {
            &mut stack[..self.dim]
        } else {
            heap = vec![0.0; self.dim];
            &mut heap
        };
        for ((s, a), b) in sq.iter_mut().zip(x).zip(y) {
            let d = a - b;
            *s = d * d;
        }
        let mut acc = Dot2::default();
        for t in &self.terms {
            let mut r2 = 0.0;
            for &i in t.subset.indices() {
                r2 += sq[i];
            }
            acc.add(t.amplitude, t.kernel.eval_sq(r2));
        }
        acc.value()
    }
}

#[inline]
fn eval_fast_unchecked(fast: FastPath, x: &[f64], y: &[f64]) -> f64 {
    let dim = x.len();
    let mut stack = [0.0; STACK_DIM];
    let mut heap;
    let z: &mut [f64] = if dim <= STACK_DIM {
        &mut stack[..dim]
    } else {
        heap = vec![0.0; dim];
        &mut heap
    };
    for ((zi, a), b) in z.iter_mut().zip(x).zip(y) {
        let d = a - b;
        *zi = (-(d * d) * fast.inv_two_l2).exp();
    }
    fast.amplitude * elementary_symmetric(z, fast.order)
}

fn detect_fast_path(dim: usize, terms: &[Term]) -> Option<FastPath> {
    let first = &terms[0];
    let order = first.subset.len();
    if first.kernel.family() != KernelFamily::SquaredExponential {
        return None;
    }
    let uniform = terms.iter().all(|t| {
        t.subset.len() == order && t.kernel == first.kernel && t.amplitude == first.amplitude
    });
    // subsets are distinct and in range, so having C(D, d) of them means all of them
    if !uniform || binomial(dim, order) != terms.len() as u128 {
        return None;
    }
    let l = first.kernel.length();
    Some(FastPath {
        order,
        amplitude: first.amplitude,
        inv_two_l2: 1.0 / (2.0 * l * l),
    })
}
