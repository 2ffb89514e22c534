//! Evaluation of estimated sequences against ground truth.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{conditional_correlation, edge_scores, threshold_edges, Adjacency};
use crate::model::PrecisionSequence;
use crate::spd::{materialize, GeodesicPair, SpdMatrix};

/// Rank-based (Mann–Whitney) area under the ROC curve; ties count ½.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<f64> {
    let pos = scores.iter().filter(|s| s.1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(format!(
            "AUC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.0.is_nan()) {
        return Err(Error::InvalidParameter(format!("score is NaN: {:?}", bad)));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    // Average ranks (1-based) over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| scores[k].1).count() as f64;
        i = j + 1;
    }
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// F1 score of `threshold_edges(corr, tau)` against `truth`.
pub fn f1_at_threshold(corr: &DMatrix<f64>, truth: &Adjacency, tau: f64) -> Result<f64> {
    if truth.edge_count() == 0 {
        return Err(Error::Degenerate("F1 needs at least one true edge".into()));
    }
    let pred = threshold_edges(corr, tau)?;
    let tp = pred.edges().iter().filter(|&&(i, j)| truth.has_edge(i, j)).count() as f64;
    let fp = pred.edge_count() as f64 - tp;
    let fn_ = truth.edge_count() as f64 - tp;
    if tp == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / (2.0 * tp + fp + fn_))
}

fn check_windows(est: usize, truth: usize) -> Result<()> {
    if est != truth {
        return Err(Error::DimensionMismatch {
            context: "windows in estimate vs truth",
            expected: (truth, 1),
            found: (est, 1),
        });
    }
    Ok(())
}

/// Per-window squared geodesic distances `d²(Θ̂_t, Θ*_t)`.
pub fn geodesic_errors(est: &PrecisionSequence, truth: &[SpdMatrix]) -> Result<Vec<f64>> {
    check_windows(est.len(), truth.len())?;
    est.points()
        .iter()
        .zip(truth)
        .map(|(p, t)| Ok(GeodesicPair::new(&materialize(p), t)?.dist2()))
        .collect()
}

/// `(1/T) Σ_t d²(Θ̂_t, Θ*_t)`.
pub fn mean_geodesic_error(est: &PrecisionSequence, truth: &[SpdMatrix]) -> Result<f64> {
    let e = geodesic_errors(est, truth)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// `Σ_t ‖Θ_t − Θ_{t+1}‖_F` over dense matrices.
pub fn temporal_variation_dense(seq: &[SpdMatrix]) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "temporal variation needs at least two windows, got {}",
            seq.len()
        )));
    }
    Ok(seq
        .windows(2)
        .map(|w| (w[0].as_matrix() - w[1].as_matrix()).norm())
        .sum())
}

/// `Σ_t ‖Θ_t − Θ_{t+1}‖_F`.
pub fn temporal_variation(seq: &PrecisionSequence) -> Result<f64> {
    temporal_variation_dense(&seq.materialize())
}

/// Evaluation summary; per-window vectors are indexed by window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over windows of the per-window AUC.
    pub auc: f64,
    /// Mean over windows of the per-window F1.
    pub f1: f64,
    pub threshold: f64,
    pub mean_geodesic_error: f64,
    /// Zero for single-window sequences.
    pub temporal_variation: f64,
    pub auc_per_window: Vec<f64>,
    pub f1_per_window: Vec<f64>,
    pub geodesic_error_per_window: Vec<f64>,
}

/// Evaluate an estimate against per-window truths and edge sets.
pub fn evaluate(
    est: &PrecisionSequence,
    truth: &[SpdMatrix],
    truth_edges: &[Adjacency],
    tau: f64,
) -> Result<EvalReport> {
    evaluate_dense(&est.materialize(), truth, truth_edges, tau)
}

/// [`evaluate`] for estimates given as dense matrices.
pub fn evaluate_dense(
    est: &[SpdMatrix],
    truth: &[SpdMatrix],
    truth_edges: &[Adjacency],
    tau: f64,
) -> Result<EvalReport> {
    check_windows(est.len(), truth.len())?;
    check_windows(est.len(), truth_edges.len())?;
    let mut auc = Vec::with_capacity(est.len());
    let mut f1 = Vec::with_capacity(est.len());
    let mut geo = Vec::with_capacity(est.len());
    for ((m, t), edges) in est.iter().zip(truth).zip(truth_edges) {
        let corr = conditional_correlation(m)?;
        auc.push(roc_auc(&edge_scores(&corr, edges))?);
        f1.push(f1_at_threshold(&corr, edges, tau)?);
        geo.push(GeodesicPair::new(m, t)?.dist2());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let tv = if est.len() > 1 {
        temporal_variation_dense(est)?
    } else {
        0.0
    };
    Ok(EvalReport {
        auc: mean(&auc),
        f1: mean(&f1),
        threshold: tau,
        mean_geodesic_error: mean(&geo),
        temporal_variation: tv,
        auc_per_window: auc,
        f1_per_window: f1,
        geodesic_error_per_window: geo,
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
