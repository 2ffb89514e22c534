//! Estimation of time-varying low-rank-plus-diagonal precision matrices
//! `Θ_t = Y_t Y_tᵀ + D_t` by Riemannian conjugate gradient on the quotient
//! of (full-rank factor, positive diagonal) pairs by the orthogonal group,
//! with geodesic temporal smoothing between neighbouring windows.
//!
//! Module map:
//!
//! - [`manifold`]: metric, horizontal projection, gradient conversion,
//!   retraction and transport on factor points.
//! - [`spd`]: dense SPD helpers, Woodbury inverses, matrix logarithm and
//!   the affine-invariant geodesic distance.
//! - [`model`]: elliptical likelihoods, smooth sparsity penalty and the full
//!   objective with its Riemannian gradient.
//! - [`solver`]: conjugate-gradient driver with strong Wolfe line search.
//! - [`graph`], [`graphgen`], [`metrics`]: graph extraction, synthetic
//!   ground truth and data, evaluation.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod graphgen;
mod linalg;
pub mod manifold;
pub mod metrics;
pub mod model;
pub mod par;
pub mod solver;
pub mod spd;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use manifold::{FactorPoint, Horizontal, Tangent};
pub use model::{EllipticalFamily, ModelConfig, PrecisionSequence, WindowedDataset};
pub use par::Exec;
pub use solver::{fit, SolverConfig, SolverTrace, Termination};
pub use spd::SpdMatrix;
