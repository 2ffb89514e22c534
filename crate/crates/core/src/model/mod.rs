//! Statistical model: elliptical likelihoods per window, a smooth sparsity
//! penalty on the off-diagonal of `Θ_t`, and squared geodesic distances
//! between neighbouring windows.
//!
//! ```text
//! F(θ_1..θ_T) = Σ_t [ nll_t(Θ_t) + λ Σ_{q≠ℓ} ψ_ε(Θ_t,qℓ) ] + μ Σ_t d²(Θ_t, Θ_{t+1})
//! ```

mod family;
mod objective;
mod terms;

pub use family::EllipticalFamily;
pub use objective::{
    objective_egrad_dense, objective_rgrad, objective_rgrad_dense, objective_value,
    objective_value_and_rgrad, Evaluation,
};
pub use terms::{
    nll, nll_egrad_action, nll_egrad_dense, penalty, penalty_egrad, penalty_scalar,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{retract, FactorPoint, Tangent};
use crate::spd::{materialize, SpdMatrix};

/// `T` observation windows; window `t` is `n_t × p` with one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    windows: Vec<DMatrix<f64>>,
}

impl WindowedDataset {
    pub fn new(windows: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = windows.first() else {
            return Err(Error::InvalidParameter("dataset needs at least one window".into()));
        };
        let p = first.ncols();
        if p == 0 {
            return Err(Error::InvalidParameter("dataset has zero variables".into()));
        }
        for (t, w) in windows.iter().enumerate() {
            if w.nrows() == 0 {
                return Err(Error::InvalidParameter(format!("window {t} has no samples")));
            }
            if w.ncols() != p {
                return Err(Error::DimensionMismatch {
                    context: "dataset window",
                    expected: (w.nrows(), p),
                    found: w.shape(),
                });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "window {t} has non-finite entries"
                )));
            }
        }
        Ok(Self { windows })
    }

    pub fn windows(&self) -> &[DMatrix<f64>] {
        &self.windows
    }

    pub fn window(&self, t: usize) -> &DMatrix<f64> {
        &self.windows[t]
    }

    /// Number of windows `T`.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Number of variables `p`.
    pub fn dim(&self) -> usize {
        self.windows[0].ncols()
    }
}

/// `T` factor points sharing `(p, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionSequence {
    points: Vec<FactorPoint>,
}

impl PrecisionSequence {
    pub fn new(points: Vec<FactorPoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidParameter("sequence needs at least one window".into()));
        };
        let shape = first.y().shape();
        for p in &points {
            if p.y().shape() != shape {
                return Err(Error::DimensionMismatch {
                    context: "sequence factor",
                    expected: shape,
                    found: p.y().shape(),
                });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[FactorPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<FactorPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn rank(&self) -> usize {
        self.points[0].rank()
    }

    /// Dense `Θ_t` for every window.
    pub fn materialize(&self) -> Vec<SpdMatrix> {
        self.points.iter().map(materialize).collect()
    }

    /// Retract every window along its own tangent.
    pub fn retract(&self, xi: &[Tangent]) -> Result<Self> {
        if xi.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "sequence tangent",
                expected: (self.len(), 1),
                found: (xi.len(), 1),
            });
        }
        let points = self
            .points
            .iter()
            .zip(xi)
            .map(|(p, x)| retract(p, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points })
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub family: EllipticalFamily,
    /// Sparsity weight `λ ≥ 0`.
    pub lambda: f64,
    /// Temporal weight `μ ≥ 0`; zero decouples the windows.
    pub mu: f64,
    /// Smoothing `ε > 0` of the penalty `ψ_ε(s) = ε log cosh(s/ε)`.
    pub epsilon: f64,
    /// Factor rank `r ≥ 1`.
    pub rank: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: EllipticalFamily::Gaussian,
            lambda: 0.01,
            mu: 0.5,
            epsilon: 1e-3,
            rank: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        let bad = |name: &str, v: f64| {
            Err(Error::InvalidParameter(format!("{name} out of range: {v}")))
        };
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda", self.lambda);
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return bad("mu", self.mu);
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", self.epsilon);
        }
        if self.rank == 0 {
            return Err(Error::InvalidParameter("rank must be at least 1".into()));
        }
        Ok(())
    }

    /// Check that a sequence and a dataset agree with this configuration.
    pub fn check_compatible(&self, seq: &PrecisionSequence, data: &WindowedDataset) -> Result<()> {
        self.validate()?;
        if seq.len() != data.len() {
            return Err(Error::DimensionMismatch {
                context: "windows in sequence vs dataset",
                expected: (data.len(), 1),
                found: (seq.len(), 1),
            });
        }
        if seq.dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                context: "variables in sequence vs dataset",
                expected: (data.dim(), 1),
                found: (seq.dim(), 1),
            });
        }
        if seq.rank() != self.rank {
            return Err(Error::DimensionMismatch {
                context: "sequence rank vs config",
                expected: (self.rank, 1),
                found: (seq.rank(), 1),
            });
        }
        Ok(())
    }
}
