//! Graphs from precision matrices: conditional correlations and thresholded
//! adjacency.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::SpdMatrix;

/// Default edge threshold on `|corr|`.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.05;

/// Symmetric 0/1 adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    p: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            bits: vec![false; p * p],
        }
    }

    /// Build from unordered pairs `(i, j)`, `i ≠ j`.
    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(p);
        for &(i, j) in edges {
            if i >= p || j >= p || i == j {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) invalid for {p} nodes"
                )));
            }
            a.set(i, j, true);
        }
        Ok(a)
    }

    /// Nonzero off-diagonal pattern of a matrix.
    pub fn support(m: &DMatrix<f64>) -> Self {
        let p = m.nrows();
        let mut a = Self::empty(p);
        for j in 0..p {
            for i in (j + 1)..p {
                if m[(i, j)] != 0.0 || m[(j, i)] != 0.0 {
                    a.set(i, j, true);
                }
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.p + j]
    }

    fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.p + j] = v;
        self.bits[j * self.p + i] = v;
    }

    /// Edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.p {
            for j in (i + 1)..self.p {
                if self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count() / 2
    }
}

/// Conditional correlations `−Θ_ij/√(Θ_ii Θ_jj)` with a zero diagonal.
pub fn conditional_correlation(theta: &SpdMatrix) -> Result<DMatrix<f64>> {
    let m = theta.as_matrix();
    let p = m.nrows();
    let diag = m.diagonal();
    if let Some(bad) = diag.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!("diagonal entry {bad}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            0.0
        } else {
            -m[(i, j)] / (diag[i] * diag[j]).sqrt()
        }
    }))
}

/// Edges where `|corr_ij| ≥ tau`.
pub fn threshold_edges(corr: &DMatrix<f64>, tau: f64) -> Result<Adjacency> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {tau}")));
    }
    let p = corr.nrows();
    let mut a = Adjacency::empty(p);
    for j in 0..p {
        for i in (j + 1)..p {
            if corr[(i, j)].abs() >= tau {
                a.set(i, j, true);
            }
        }
    }
    Ok(a)
}

/// Upper-triangle `|corr|` scores paired with truth labels, for ROC analysis.
pub fn edge_scores(corr: &DMatrix<f64>, truth: &Adjacency) -> Vec<(f64, bool)> {
    let p = corr.nrows();
    let mut out = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            out.push((corr[(i, j)].abs(), truth.has_edge(i, j)));
        }
    }
    out
}
