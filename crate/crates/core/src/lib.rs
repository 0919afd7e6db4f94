//! Debiased Lasso inference for high-dimensional linear regression.
//!
//! The pipeline fits a Lasso, estimates the precision matrix of the design,
//! adds the correction `(1/n) Ω̂ Xᵀ(Y − Xθ̂)` to obtain an approximately
//! Gaussian estimator, and turns it into per-coordinate p-values and
//! confidence intervals. A Monte-Carlo harness measures type-I error and
//! power on synthetic Gaussian designs.

pub mod debias;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod inference;
pub mod lasso;
pub mod normal;
pub mod precision;
pub mod sampler;
pub mod types;

pub use error::{Error, Result};
