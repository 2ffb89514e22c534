//! Synthetic ground truth and data: random-graph Laplacian precisions,
//! sparse low-rank-plus-diagonal precisions, slow temporal perturbation,
//! and Gaussian / Student-t sampling.
//!
//! Randomness comes from ChaCha8 streams derived from one `u64` seed:
//! stream 0 drives the ground-truth chain (window 0, then each perturbation
//! in window order) and stream `1 + t` draws the samples of window `t`. The
//! output is therefore a pure function of the configuration and seed, and
//! windows can be sampled in any order.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::manifold::FactorPoint;
use crate::model::WindowedDataset;
use crate::spd::{materialize, SpdMatrix};

/// Range of edge weights on sampled graph supports.
pub const EDGE_WEIGHT_RANGE: (f64, f64) = (2.0, 5.0);
/// Default diagonal shift of Laplacian precisions.
pub const DEFAULT_KAPPA: f64 = 0.10;
/// Default loading magnitude range for LRaD truths.
pub const LOAD_RANGE: (f64, f64) = (1.0, 3.0);
/// Default diagonal range for LRaD truths.
pub const DIAG_RANGE: (f64, f64) = (0.5, 1.5);

/// The RNG for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphModel {
    ErdosRenyi { edge_prob: f64 },
    BarabasiAlbert { m: usize },
    WattsStrogatz { k: usize, beta: f64 },
    /// Nodes uniform in the unit square; kernel weights
    /// `exp(−‖x_i − x_j‖²/(2σ²))`, pruned below `tau_prune`.
    GaussianRgg { sigma: f64, tau_prune: f64 },
}

impl GraphModel {
    pub const ER: Self = Self::ErdosRenyi { edge_prob: 0.10 };
    pub const BA: Self = Self::BarabasiAlbert { m: 2 };
    pub const WS: Self = Self::WattsStrogatz { k: 4, beta: 0.30 };
    pub const GRG: Self = Self::GaussianRgg {
        sigma: 0.5,
        tau_prune: 0.5,
    };

    pub fn validate(&self, p: usize) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParameter(m));
        if p < 3 {
            return fail(format!("graph generators need p >= 3, got {p}"));
        }
        match *self {
            Self::ErdosRenyi { edge_prob } if !(0.0..=1.0).contains(&edge_prob) => {
                fail(format!("edge probability {edge_prob} outside [0, 1]"))
            }
            Self::BarabasiAlbert { m } if m == 0 || m >= p => {
                fail(format!("Barabási–Albert needs 1 <= m < p, got m={m}"))
            }
            Self::WattsStrogatz { k, beta }
                if k < 2 || k % 2 != 0 || k >= p || !(0.0..=1.0).contains(&beta) =>
            {
                fail(format!("Watts–Strogatz needs even 2 <= k < p and beta in [0, 1], got k={k} beta={beta}"))
            }
            Self::GaussianRgg { sigma, tau_prune } if !(sigma > 0.0 && tau_prune > 0.0) => {
                fail(format!("Gaussian RGG needs sigma, tau_prune > 0, got {sigma}, {tau_prune}"))
            }
            _ => Ok(()),
        }
    }
}

fn add_edge(adj: &mut DMatrix<f64>, i: usize, j: usize, w: f64) {
    adj[(i, j)] = w;
    adj[(j, i)] = w;
}

/// Assign `U(2, 5)` weights to every edge of a 0/1 pattern, row-major over
/// the upper triangle.
fn weigh(pattern: &DMatrix<f64>, rng: &mut impl Rng) -> DMatrix<f64> {
    let p = pattern.nrows();
    let mut adj = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            if pattern[(i, j)] != 0.0 {
                let w = rng.random_range(EDGE_WEIGHT_RANGE.0..EDGE_WEIGHT_RANGE.1);
                add_edge(&mut adj, i, j, w);
            }
        }
    }
    adj
}

/// Weighted symmetric adjacency with zero diagonal.
pub fn gen_graph(model: GraphModel, p: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    model.validate(p)?;
    let mut pat = DMatrix::zeros(p, p);
    match model {
        GraphModel::ErdosRenyi { edge_prob } => {
            for i in 0..p {
                for j in (i + 1)..p {
                    if rng.random_bool(edge_prob) {
                        add_edge(&mut pat, i, j, 1.0);
                    }
                }
            }
        }
        GraphModel::BarabasiAlbert { m } => {
            for i in 0..=m {
                for j in (i + 1)..=m {
                    add_edge(&mut pat, i, j, 1.0);
                }
            }
            let mut degree: Vec<usize> = (0..p).map(|i| if i <= m { m } else { 0 }).collect();
            for v in (m + 1)..p {
                let mut chosen = Vec::with_capacity(m);
                for _ in 0..m {
                    let total: usize = (0..v).filter(|u| !chosen.contains(u)).map(|u| degree[u]).sum();
                    let mut ticket = rng.random_range(0..total);
                    let pick = (0..v)
                        .filter(|u| !chosen.contains(u))
                        .find(|&u| {
                            if ticket < degree[u] {
                                true
                            } else {
                                ticket -= degree[u];
                                false
                            }
                        })
                        .expect("ticket falls inside the total degree");
                    chosen.push(pick);
                }
                for &u in &chosen {
                    add_edge(&mut pat, u, v, 1.0);
                    degree[u] += 1;
                }
                degree[v] = m;
            }
        }
        GraphModel::WattsStrogatz { k, beta } => {
            for i in 0..p {
                for j in 1..=k / 2 {
                    add_edge(&mut pat, i, (i + j) % p, 1.0);
                }
            }
            for j in 1..=k / 2 {
                for u in 0..p {
                    let v = (u + j) % p;
                    if pat[(u, v)] == 0.0 || !rng.random_bool(beta) {
                        continue;
                    }
                    let degree = (0..p).filter(|&w| pat[(u, w)] != 0.0).count();
                    if degree >= p - 1 {
                        continue;
                    }
                    let mut w = rng.random_range(0..p);
                    while w == u || pat[(u, w)] != 0.0 {
                        w = rng.random_range(0..p);
                    }
                    add_edge(&mut pat, u, v, 0.0);
                    add_edge(&mut pat, u, w, 1.0);
                }
            }
        }
        GraphModel::GaussianRgg { sigma, tau_prune } => {
            let pts: Vec<(f64, f64)> = (0..p).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
            let mut adj = DMatrix::zeros(p, p);
            for i in 0..p {
                for j in (i + 1)..p {
                    let d2 = (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2);
                    let w = (-d2 / (2.0 * sigma * sigma)).exp();
                    if w >= tau_prune {
                        add_edge(&mut adj, i, j, w);
                    }
                }
            }
            return Ok(adj);
        }
    }
    Ok(weigh(&pat, rng))
}

fn check_adjacency(adj: &DMatrix<f64>) -> Result<()> {
    let p = adj.nrows();
    if adj.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "adjacency",
            expected: (p, p),
            found: adj.shape(),
        });
    }
    for i in 0..p {
        if adj[(i, i)] != 0.0 {
            return Err(Error::InvalidParameter("adjacency has a nonzero diagonal".into()));
        }
        for j in 0..p {
            let w = adj[(i, j)];
            if !(w >= 0.0 && w.is_finite()) || w != adj[(j, i)] {
                return Err(Error::InvalidParameter(
                    "adjacency must be symmetric, finite and nonnegative".into(),
                ));
            }
        }
    }
    Ok(())
}

/// `Θ = L + κI` with `L = diag(degree) − adj`; `λ_min(Θ) ≥ κ`.
pub fn laplacian_precision(adj: &DMatrix<f64>, kappa: f64) -> Result<SpdMatrix> {
    check_adjacency(adj)?;
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
    }
    let p = adj.nrows();
    let mut theta = -adj;
    for i in 0..p {
        theta[(i, i)] = adj.row(i).sum() + kappa;
    }
    SpdMatrix::new(theta)
}

/// Remove `⌊frac·|E|⌋` uniformly chosen edges and add as many uniformly
/// chosen non-edges of the original graph, with fresh `U(2, 5)` weights.
pub fn perturb_graph(adj: &DMatrix<f64>, frac: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    check_adjacency(adj)?;
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::InvalidParameter(format!("fraction {frac} outside [0, 1]")));
    }
    let p = adj.nrows();
    let (mut edges, mut holes) = (Vec::new(), Vec::new());
    for i in 0..p {
        for j in (i + 1)..p {
            if adj[(i, j)] != 0.0 {
                edges.push((i, j));
            } else {
                holes.push((i, j));
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::InvalidParameter("cannot perturb a graph without edges".into()));
    }
    let k = (frac * edges.len() as f64).floor() as usize;
    if k == 0 {
        return Ok(adj.clone());
    }
    if holes.len() < k {
        return Err(Error::InvalidParameter(format!(
            "need {k} non-edges to rewire into, graph has {}",
            holes.len()
        )));
    }
    let mut out = adj.clone();
    for idx in sample(rng, edges.len(), k).into_iter() {
        let (i, j) = edges[idx];
        add_edge(&mut out, i, j, 0.0);
    }
    for idx in sample(rng, holes.len(), k).into_iter() {
        let (i, j) = holes[idx];
        let w = rng.random_range(EDGE_WEIGHT_RANGE.0..EDGE_WEIGHT_RANGE.1);
        add_edge(&mut out, i, j, w);
    }
    Ok(out)
}

/// Sparsity pattern of LRaD factor loadings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loading {
    /// Each entry nonzero independently with probability `density`.
    Bernoulli { density: f64 },
    /// Each variable loads on exactly one factor (balanced, randomly
    /// assigned). The precision is then block-structured and, with the
    /// default ranges, every nonzero conditional correlation has magnitude
    /// at least `√(1/(1+1.5))² = 0.4`.
    SingleFactor,
}

/// Sparse positive loadings `Y` (magnitudes `U(load_range)`) and diagonal
/// `D ~ U(diag_range)`; resampled up to 100 times until `Y` has full rank.
pub fn gen_lrad_truth(
    p: usize,
    r: usize,
    loading: Loading,
    load_range: (f64, f64),
    diag_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<FactorPoint> {
    if r == 0 || r > p {
        return Err(Error::InvalidParameter(format!("need 1 <= r <= p, got r={r}, p={p}")));
    }
    if !(0.0 < load_range.0 && load_range.0 < load_range.1 && 0.0 < diag_range.0 && diag_range.0 < diag_range.1) {
        return Err(Error::InvalidParameter("loading and diagonal ranges must be positive intervals".into()));
    }
    if let Loading::Bernoulli { density } = loading {
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::InvalidParameter(format!("loading density {density} outside (0, 1]")));
        }
    }
    let d = DVector::from_fn(p, |_, _| rng.random_range(diag_range.0..diag_range.1));
    for _ in 0..100 {
        let mut y = DMatrix::zeros(p, r);
        match loading {
            Loading::Bernoulli { density } => {
                for j in 0..r {
                    for i in 0..p {
                        if rng.random_bool(density) {
                            y[(i, j)] = rng.random_range(load_range.0..load_range.1);
                        }
                    }
                }
            }
            Loading::SingleFactor => {
                let order = sample(rng, p, p);
                for (slot, i) in order.into_iter().enumerate() {
                    y[(i, slot % r)] = rng.random_range(load_range.0..load_range.1);
                }
            }
        }
        if let Ok(point) = FactorPoint::new(y, d.clone()) {
            return Ok(point);
        }
    }
    Err(Error::Degenerate(format!(
        "no full-rank {p}x{r} loading after 100 draws; increase the density"
    )))
}

/// Redraw `⌊frac·nnz⌋` nonzero loadings from `U(load_range)`, keeping the
/// support and `D`.
pub fn perturb_lrad(
    point: &FactorPoint,
    frac: f64,
    load_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<FactorPoint> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::InvalidParameter(format!("fraction {frac} outside [0, 1]")));
    }
    let y = point.y();
    let nonzero: Vec<usize> = (0..y.len()).filter(|&k| y[k] != 0.0).collect();
    let k = (frac * nonzero.len() as f64).floor() as usize;
    for _ in 0..100 {
        let mut next = y.clone();
        for idx in sample(rng, nonzero.len(), k).into_iter() {
            next[nonzero[idx]] = rng.random_range(load_range.0..load_range.1);
        }
        if let Ok(p) = FactorPoint::new(next, point.d().clone()) {
            return Ok(p);
        }
    }
    Err(Error::Degenerate("perturbed loadings stayed rank-deficient".into()))
}

/// `n` rows from `N(0, Θ⁻¹)`: `x = L⁻ᵀz` with `Θ = LLᵀ`.
pub fn sample_gaussian(theta: &SpdMatrix, n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let p = theta.dim();
    let l = theta.cholesky()?.l();
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let xt = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
    Ok(xt.transpose())
}

/// `n` rows of a multivariate t: `x = √(ν/χ²_ν)·z` with `z ~ N(0, Θ⁻¹)`.
pub fn sample_student_t(theta: &SpdMatrix, nu: f64, n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("degrees of freedom must be positive, got {nu}")));
    }
    let chi = ChiSquared::new(nu).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut x = sample_gaussian(theta, n, rng)?;
    for mut row in x.row_iter_mut() {
        let g = (nu / chi.sample(rng)).sqrt();
        row *= g;
    }
    Ok(x)
}

/// How the ground-truth precision of each window is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthModel {
    /// Laplacian of a random weighted graph plus `κI`.
    Graph { graph: GraphModel, kappa: f64 },
    /// `YYᵀ + D` with sparse positive loadings.
    Lrad { rank: usize, loading: Loading },
}

/// Observation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Noise {
    Gaussian,
    StudentT { nu: f64 },
}

/// Everything needed to regenerate a synthetic benchmark instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub p: usize,
    pub windows: usize,
    pub n: usize,
    pub truth: TruthModel,
    pub noise: Noise,
    /// Fraction of edges (graphs) or nonzero loadings (LRaD) changed between
    /// consecutive windows.
    pub perturb_frac: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Named presets. All use `T = 5`, 10% perturbation, seed 0.
    pub fn preset(name: &str) -> Option<Self> {
        let graph = |graph| TruthModel::Graph {
            graph,
            kappa: DEFAULT_KAPPA,
        };
        let lrad = TruthModel::Lrad {
            rank: 10,
            loading: Loading::Bernoulli { density: 0.2 },
        };
        let base = Self {
            p: 50,
            windows: 5,
            n: 200,
            truth: graph(GraphModel::ER),
            noise: Noise::Gaussian,
            perturb_frac: 0.10,
            seed: 0,
        };
        Some(match name {
            "er-small" => base,
            "ba-small" => Self { truth: graph(GraphModel::BA), ..base },
            "ws-small" => Self { truth: graph(GraphModel::WS), ..base },
            "grg-small" => Self { truth: graph(GraphModel::GRG), ..base },
            "lrad" => Self { truth: lrad, ..base },
            "lrad-heavy" => Self {
                truth: lrad,
                noise: Noise::StudentT { nu: 2.0 },
                ..base
            },
            "lrad-conv" => Self {
                p: 20,
                windows: 4,
                truth: TruthModel::Lrad {
                    rank: 3,
                    loading: Loading::Bernoulli { density: 0.2 },
                },
                ..base
            },
            _ => return None,
        })
    }

    pub const PRESETS: &'static [&'static str] =
        &["er-small", "ba-small", "ws-small", "grg-small", "lrad", "lrad-heavy", "lrad-conv"];

    pub fn validate(&self) -> Result<()> {
        if self.windows == 0 {
            return Err(Error::InvalidParameter("at least one window is required".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("at least one sample per window is required".into()));
        }
        if !(0.0..=1.0).contains(&self.perturb_frac) {
            return Err(Error::InvalidParameter(format!(
                "perturbation fraction {} outside [0, 1]",
                self.perturb_frac
            )));
        }
        match self.truth {
            TruthModel::Graph { graph, kappa } => {
                graph.validate(self.p)?;
                if !(kappa > 0.0) {
                    return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
                }
            }
            TruthModel::Lrad { rank, .. } => {
                if rank == 0 || rank > self.p {
                    return Err(Error::InvalidParameter(format!("LRaD rank {rank} invalid for p={}", self.p)));
                }
            }
        }
        if let Noise::StudentT { nu } = self.noise {
            if !(nu > 0.0) {
                return Err(Error::InvalidParameter(format!("degrees of freedom must be positive, got {nu}")));
            }
        }
        Ok(())
    }
}

/// Per-window ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub precisions: Vec<SpdMatrix>,
    pub edges: Vec<Adjacency>,
    /// Present for LRaD truths.
    pub factors: Option<Vec<FactorPoint>>,
}

/// Ground truth chain from stream 0, then samples per window.
pub fn generate(cfg: &SyntheticConfig) -> Result<(WindowedDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let (precisions, edges, factors) = match cfg.truth {
        TruthModel::Graph { graph, kappa } => {
            let mut adj = gen_graph(graph, cfg.p, &mut rng)?;
            let mut precisions = Vec::with_capacity(cfg.windows);
            let mut edges = Vec::with_capacity(cfg.windows);
            for t in 0..cfg.windows {
                if t > 0 {
                    adj = perturb_graph(&adj, cfg.perturb_frac, &mut rng)?;
                }
                edges.push(Adjacency::support(&adj));
                precisions.push(laplacian_precision(&adj, kappa)?);
            }
            (precisions, edges, None)
        }
        TruthModel::Lrad { rank, loading } => {
            let mut point = gen_lrad_truth(cfg.p, rank, loading, LOAD_RANGE, DIAG_RANGE, &mut rng)?;
            let mut factors = Vec::with_capacity(cfg.windows);
            for t in 0..cfg.windows {
                if t > 0 {
                    point = perturb_lrad(&point, cfg.perturb_frac, LOAD_RANGE, &mut rng)?;
                }
                factors.push(point.clone());
            }
            let precisions: Vec<SpdMatrix> = factors.iter().map(materialize).collect();
            let edges = precisions.iter().map(|m| Adjacency::support(m.as_matrix())).collect();
            (precisions, edges, Some(factors))
        }
    };
    let windows = precisions
        .iter()
        .enumerate()
        .map(|(t, theta)| {
            let mut rng = stream_rng(cfg.seed, 1 + t as u64);
            match cfg.noise {
                Noise::Gaussian => sample_gaussian(theta, cfg.n, &mut rng),
                Noise::StudentT { nu } => sample_student_t(theta, nu, cfg.n, &mut rng),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        WindowedDataset::new(windows)?,
        GroundTruth {
            precisions,
            edges,
            factors,
        },
    ))
}
