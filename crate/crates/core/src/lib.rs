//! Penalized generalized linear models with weakly decomposable norm
//! penalties (ℓ1 and the weighted group lasso), feasible weighted nodewise
//! regression for an approximate inverse of the sample Hessian, and the
//! debiased estimator with its Wald tests and confidence intervals.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod glm;
pub mod inference;
pub mod nodewise;
pub mod normal;
pub mod norms;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
pub use glm::{Dataset, LossKind};
pub use norms::{AllowedSet, GroupPartition, Norm, NormSpec, WeakNorm};
pub use solver::{fit, lambda_max, FitOptions, FitResult};
