//! Configuration file schema and the merge of file values with flags.
//!
//! ```toml
//! seed = 7
//! max_m = 15000
//!
//! [data]
//! path = "train.csv"
//! scaling = "minmax"
//!
//! [kernel]
//! family = "se"
//! d = 2            # or terms_file = "terms.toml", or [[kernel.terms]] entries
//! length = 1.22
//! delta = 5e-4
//! amplitudes = "uniform"
//!
//! [optimize]
//! mode = "per-term"
//! budget = 200
//! bounds = "0.01:100"
//!
//! [generator]
//! family = "additive-1d"
//! dim = 7
//! points = 1000
//!
//! [benchmark]
//! d = [1, 2]
//! m = [100, 500]
//! runs = 10
//! test_size = 5000
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hdmr_gpr::data::ScalingKind;
use hdmr_gpr::hyperopt::{Bounds, OptimizationMode, OptimizationSpec};
use hdmr_gpr::synth::{SynthFamily, SynthSpec};
use hdmr_gpr::{BaseKernel, HdmrKernelSpec, KernelFamily, SubsetIndex, Term};
use serde::{Deserialize, Serialize};

use crate::args::{GeneratorArgs, KernelArgs, OptimizeArgs};
use crate::error::{CliError, CliResult};

pub const DEFAULT_MAX_M: usize = 15_000;
pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_LENGTH: f64 = 1.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub max_m: Option<usize>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub generator: GeneratorSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub scaling: Option<String>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: Option<String>,
    pub d: Option<usize>,
    pub length: Option<f64>,
    pub amplitudes: Option<String>,
    pub delta: Option<f64>,
    pub terms_file: Option<PathBuf>,
    pub terms: Option<Vec<TermEntry>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub mode: Option<String>,
    pub opt_delta: Option<bool>,
    pub budget: Option<usize>,
    pub restarts: Option<usize>,
    pub bounds: Option<String>,
    pub delta_bounds: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub family: Option<String>,
    pub dim: Option<usize>,
    pub points: Option<usize>,
    pub noise: Option<f64>,
    pub dummies: Option<Vec<usize>>,
    pub pairs: Option<Vec<(usize, usize)>>,
    pub domain: Option<(f64, f64)>,
    pub gp_length: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub d: Option<Vec<usize>>,
    pub m: Option<Vec<usize>>,
    pub runs: Option<usize>,
    pub test_size: Option<usize>,
}

/// One entry of an explicit term list. Missing fields fall back to the
/// kernel-wide settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    pub indices: Vec<usize>,
    pub amplitude: Option<f64>,
    pub family: Option<String>,
    pub length: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermsFile {
    terms: Vec<TermEntry>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub fn parse_range(flag: &str, s: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::usage(format!("{flag}: expected `lo:hi`, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn parse_pairs(s: &str) -> CliResult<Vec<(usize, usize)>> {
    s.split(',')
        .map(|p| {
            let bad = || CliError::usage(format!("--pairs: expected `a-b[,c-d…]`, got `{s}`"));
            let (a, b) = p.split_once('-').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn parse<T: FromStr<Err = hdmr_gpr::Error>>(s: &str) -> CliResult<T> {
    s.parse().map_err(|e: hdmr_gpr::Error| CliError::usage(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum AmplitudePolicy {
    Uniform,
    Random { lo: f64, hi: f64 },
}

impl FromStr for AmplitudePolicy {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::usage(format!("--amplitudes: expected `uniform` or `random:lo:hi`, got `{s}`"));
        match s.trim() {
            "uniform" => Ok(AmplitudePolicy::Uniform),
            other => {
                let rest = other.strip_prefix("random:").ok_or_else(bad)?;
                let (lo, hi) = parse_range("--amplitudes", rest)?;
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(bad());
                }
                Ok(AmplitudePolicy::Random { lo, hi })
            }
        }
    }
}

/// Kernel-wide settings shared by `train` and `benchmark`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelSettings {
    pub family: KernelFamily,
    pub length: f64,
    pub amplitudes: AmplitudePolicy,
    pub delta: f64,
    pub scaling: ScalingKind,
}

impl KernelSettings {
    pub fn resolve(flags: &KernelArgs, file: &FileConfig) -> CliResult<Self> {
        let family = match flags.family.as_deref().or(file.kernel.family.as_deref()) {
            Some(s) => parse(s)?,
            None => KernelFamily::SquaredExponential,
        };
        let length = flags.length.or(file.kernel.length).unwrap_or(DEFAULT_LENGTH);
        let delta = flags.delta.or(file.kernel.delta).unwrap_or(DEFAULT_DELTA);
        let amplitudes = match flags.amplitudes.as_deref().or(file.kernel.amplitudes.as_deref()) {
            Some(s) => s.parse()?,
            None => AmplitudePolicy::Uniform,
        };
        let scaling = match flags.scaling.as_deref().or(file.data.scaling.as_deref()) {
            Some(s) => parse(s)?,
            None => ScalingKind::MinMax,
        };
        BaseKernel::new(family, length).map_err(|e| CliError::usage(e.to_string()))?;
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(CliError::usage(format!("--delta must be ≥ 0, got {delta}")));
        }
        Ok(Self {
            family,
            length,
            amplitudes,
            delta,
            scaling,
        })
    }

    pub fn base(&self) -> BaseKernel {
        BaseKernel::new(self.family, self.length).expect("validated in resolve")
    }

    /// Uniform spec of order `d`, with amplitudes drawn per the policy.
    pub fn uniform_spec(&self, dim: usize, d: usize, seed: u64) -> CliResult<HdmrKernelSpec> {
        if d == 0 || d > dim {
            return Err(CliError::usage(format!("order d={d} must lie in 1..={dim}")));
        }
        let spec = HdmrKernelSpec::uniform(dim, d, self.base())?;
        Ok(match self.amplitudes {
            AmplitudePolicy::Uniform => spec,
            AmplitudePolicy::Random { lo, hi } => spec.with_random_amplitudes(lo, hi, seed)?,
        })
    }
}

/// How the kernel's terms are laid out.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Order(usize),
    Terms(Vec<TermEntry>),
}

impl Layout {
    /// Flags win over the file; within one source, an order and a term list
    /// together are contradictory.
    pub fn resolve(d: Option<usize>, terms_file: Option<&Path>, file: &FileConfig) -> CliResult<Self> {
        if d.is_some() && terms_file.is_some() {
            return Err(CliError::usage("--d and --terms-file are mutually exclusive"));
        }
        if let Some(d) = d {
            return Ok(Layout::Order(d));
        }
        if let Some(path) = terms_file {
            return Ok(Layout::Terms(read_terms(path)?));
        }
        let k = &file.kernel;
        let given = [k.d.is_some(), k.terms_file.is_some(), k.terms.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(CliError::usage(
                "config: kernel.d, kernel.terms_file and kernel.terms are mutually exclusive",
            ));
        }
        if let Some(d) = k.d {
            Ok(Layout::Order(d))
        } else if let Some(path) = &k.terms_file {
            Ok(Layout::Terms(read_terms(path)?))
        } else if let Some(terms) = &k.terms {
            Ok(Layout::Terms(terms.clone()))
        } else {
            Err(CliError::usage("no kernel layout: pass --d or --terms-file"))
        }
    }

    pub fn build(&self, dim: usize, kernel: &KernelSettings, seed: u64) -> CliResult<HdmrKernelSpec> {
        match self {
            Layout::Order(d) => kernel.uniform_spec(dim, *d, seed),
            Layout::Terms(entries) => {
                if kernel.amplitudes != AmplitudePolicy::Uniform {
                    return Err(CliError::usage("--amplitudes applies to uniform layouts only"));
                }
                let terms = entries
                    .iter()
                    .map(|e| {
                        let family = match &e.family {
                            Some(s) => parse(s)?,
                            None => kernel.family,
                        };
                        let base = BaseKernel::new(family, e.length.unwrap_or(kernel.length))?;
                        Ok(Term {
                            subset: SubsetIndex::new(e.indices.clone())?,
                            amplitude: e.amplitude.unwrap_or(1.0),
                            kernel: base,
                        })
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(HdmrKernelSpec::new(dim, terms)?)
            }
        }
    }
}

fn read_terms(path: &Path) -> CliResult<Vec<TermEntry>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: TermsFile = toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(file.terms)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSettings {
    pub mode: Option<OptimizationMode>,
    pub spec: OptimizationSpec,
}

impl OptimizeSettings {
    pub fn resolve(flags: &OptimizeArgs, file: &FileConfig, seed: u64) -> CliResult<Self> {
        let f = &file.optimize;
        let mode = match flags.optimize.as_deref().or(f.mode.as_deref()).unwrap_or("none") {
            "none" => None,
            "shared" => Some(OptimizationMode::SharedLength),
            "per-term" => Some(OptimizationMode::PerTermLength),
            other => {
                return Err(CliError::usage(format!(
                    "--optimize: expected none | shared | per-term, got `{other}`"
                )))
            }
        };
        let optimize_delta = flags.opt_delta || f.opt_delta.unwrap_or(false);
        let tuning_given = optimize_delta
            || flags.budget.is_some()
            || flags.restarts.is_some()
            || flags.bounds.is_some()
            || flags.delta_bounds.is_some()
            || flags.trace.is_some();
        if mode.is_none() && tuning_given {
            return Err(CliError::usage(
                "optimizer settings given without --optimize shared|per-term",
            ));
        }
        let defaults = OptimizationSpec::default();
        let bounds = |flag: &str, a: Option<&String>, b: Option<&String>, d: Bounds| -> CliResult<Bounds> {
            match a.or(b) {
                Some(s) => {
                    let (lo, hi) = parse_range(flag, s)?;
                    Bounds::new(lo, hi).map_err(|e| CliError::usage(format!("{flag}: {e}")))
                }
                None => Ok(d),
            }
        };
        let spec = OptimizationSpec {
            mode: mode.unwrap_or(OptimizationMode::SharedLength),
            optimize_delta,
            length_bounds: bounds("--bounds", flags.bounds.as_ref(), f.bounds.as_ref(), defaults.length_bounds)?,
            delta_bounds: bounds(
                "--delta-bounds",
                flags.delta_bounds.as_ref(),
                f.delta_bounds.as_ref(),
                defaults.delta_bounds,
            )?,
            budget: flags.budget.or(f.budget).unwrap_or(defaults.budget),
            restarts: flags.restarts.or(f.restarts).unwrap_or(defaults.restarts),
            seed,
        };
        if spec.budget == 0 || spec.restarts == 0 {
            return Err(CliError::usage("--budget and --restarts must be at least 1"));
        }
        Ok(Self { mode, spec })
    }
}

pub fn resolve_generator(flags: &GeneratorArgs, file: &FileConfig, seed: u64) -> CliResult<SynthSpec> {
    let g = &file.generator;
    let family: SynthFamily = match flags.generator.as_deref().or(g.family.as_deref()) {
        Some(s) => parse(s)?,
        None => return Err(CliError::usage("no generator: pass --generator")),
    };
    let dim = flags
        .dim
        .or(g.dim)
        .ok_or_else(|| CliError::usage("generator needs --dim"))?;
    let m = flags.points.or(g.points).unwrap_or(0);
    let mut spec = SynthSpec::new(family, dim, m, seed);
    spec.noise = flags.noise.or(g.noise).unwrap_or(0.0);
    spec.dummies = flags.dummies.clone().or_else(|| g.dummies.clone()).unwrap_or_default();
    spec.pairs = match &flags.pairs {
        Some(s) => parse_pairs(s)?,
        None => g.pairs.clone().unwrap_or_default(),
    };
    if let Some(s) = &flags.domain {
        spec.domain = parse_range("--domain", s)?;
    } else if let Some(d) = g.domain {
        spec.domain = d;
    }
    if let Some(l) = flags.gp_length.or(g.gp_length) {
        spec.gp_length = l;
    }
    Ok(spec)
}

pub fn check_memory(m: usize, max_m: usize) -> CliResult<()> {
    if m > max_m {
        let gb = 2.0 * 8.0 * (m as f64).powi(2) / 1e9;
        return Err(CliError::usage(format!(
            "M={m} exceeds the limit of {max_m} training points (about {gb:.1} GB for the Gram matrix and its factor); raise --max-m to override"
        )));
    }
    Ok(())
}
