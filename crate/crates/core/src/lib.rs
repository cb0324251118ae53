//! Gaussian process regression with additive kernels built from
//! low-dimensional Matérn terms over subsets of the input variables.
//!
//! With a kernel `k(x, x') = Σ_S A_S k_S(x_S, x'_S)` the fitted mean
//! `f(x) = Σ_n k(x, x⁽ⁿ⁾) c_n` splits into one component function per subset
//! `S`, `f_S(x_S) = Σ_n A_S k_S(x_S, x_S⁽ⁿ⁾) c_n`. The variance of each
//! component over the training set ranks the importance of variable groups.
//!
//! Modules, bottom-up:
//! - [`kernels`]: the four closed-form Matérn kernels.
//! - [`hdmr_kernel`]: subset enumeration and the additive kernel, including the
//!   factorized evaluation of the uniform squared-exponential case.
//! - [`gpr`]: Cholesky-based exact GPR, prediction, likelihood and model files.
//! - [`analysis`]: component functions and their variance ranking.
//! - [`hyperopt`]: maximum-likelihood length scales (and optionally δ).
//! - [`data`] and [`synth`]: CSV I/O, scaling, splits, metrics, synthetic targets.

pub mod analysis;
pub mod data;
pub mod error;
pub mod gpr;
pub mod hdmr_kernel;
pub mod hyperopt;
pub mod kernels;
pub mod synth;

mod dot;

pub use error::{Error, Result};
pub use gpr::{build_gram, Covariance, PlainKernel, Prediction, Regressor, TrainedModel};
pub use hdmr_kernel::{all_subsets, HdmrKernelSpec, SubsetIndex, Term};
pub use kernels::{BaseKernel, KernelFamily};
