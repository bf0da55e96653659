//! Optimization on partitioned objectives `f(x, u)`.
//!
//! The parameter vector is split into a block `x` in which the objective is
//! strongly convex and smooth (uniformly over `u` near initialization) and a
//! block `u` that is only Lipschitz-controlled. This crate provides:
//!
//! - [`linalg`]: small dense linear algebra (one-sided Jacobi SVD, Householder
//!   QR, power iteration) and a seedable generator with Gaussian sampling.
//! - [`objective`]: the [`PartitionedObjective`] interface and its assumption
//!   constants, plus a finite-difference gradient oracle.
//! - [`optim`]: gradient descent and Nesterov's momentum with full traces.
//! - [`diagnostics`]: pointwise and trajectory checks of the inequalities that
//!   drive linear and accelerated convergence, including a Lyapunov potential.
//! - [`additive`] and [`relunet`]: two concrete partitioned models.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// Negated float comparisons treat NaN as failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod additive;
pub mod diagnostics;
pub mod linalg;
pub mod objective;
pub mod optim;
pub mod relunet;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use linalg::{Matrix, Rng, SvdResult, Vector};
pub use objective::{ObjectiveConstants, PartitionedObjective};
pub use optim::{IterTrace, Method, OptConfig};
