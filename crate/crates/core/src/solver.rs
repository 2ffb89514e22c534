//! Riemannian conjugate gradient on the product of window manifolds.
//!
//! Each iteration takes one global step `θ_t ← R_{θ_t}(α ξ_t)` for all
//! windows, with `α` chosen by a strong Wolfe line search on the full
//! objective. Directions follow the Hestenes–Stiefel rule per window,
//! clamped at zero and reset to steepest descent whenever the combined
//! direction loses the angle condition `⟨g, ξ⟩ ≤ −c₀‖g‖²`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{metric_inner_unchecked, transport, FactorPoint, Horizontal, Tangent, RANK_TOL};
use crate::model::{objective_value_and_rgrad, Evaluation, ModelConfig, PrecisionSequence, WindowedDataset};
use crate::par::Exec;

/// Solver tunables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub model: ModelConfig,
    /// Stop once `max_t ‖grad_t F‖ < eps_tol`.
    pub eps_tol: f64,
    pub max_iter: usize,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Angle safeguard: restart when `⟨g, ξ⟩ > −c₀‖g‖²`.
    pub restart_c0: f64,
    /// Objective evaluations allowed per line search.
    pub ls_max_evals: usize,
    /// Stop when the objective changes by less than this (relative) over
    /// `stagnation_window` iterations.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    /// Recorded for provenance; the solver itself draws no random numbers.
    pub seed: u64,
    /// Force sequential evaluation regardless of `exec`.
    pub deterministic: bool,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            eps_tol: 1e-6,
            max_iter: 500,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            restart_c0: 1e-4,
            ls_max_evals: 40,
            stagnation_tol: 1e-12,
            stagnation_window: 5,
            seed: 0,
            deterministic: false,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.eps_tol.is_finite() && self.eps_tol > 0.0) {
            return fail(format!("eps_tol must be positive, got {}", self.eps_tol));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return fail(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.wolfe_c1, self.wolfe_c2
            ));
        }
        if !(self.restart_c0 > 0.0 && self.restart_c0 <= 1.0) {
            return fail(format!("restart_c0 must lie in (0, 1], got {}", self.restart_c0));
        }
        if self.ls_max_evals == 0 {
            return fail("ls_max_evals must be at least 1".into());
        }
        if !(self.stagnation_tol >= 0.0) || self.stagnation_window == 0 {
            return fail("stagnation guard needs tol >= 0 and window >= 1".into());
        }
        Ok(())
    }

    fn exec(&self) -> Exec {
        if self.deterministic {
            Exec::Sequential
        } else {
            self.exec
        }
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    /// Gradient norm below `eps_tol`.
    Converged,
    /// Iteration budget exhausted.
    Budget,
    /// Objective no longer changing.
    Stagnation,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::Budget => "budget",
            Self::Stagnation => "stagnation",
        })
    }
}

/// One row of the trace; row 0 describes the initial point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub max_grad_norm: f64,
    /// Accepted step size (0 on row 0).
    pub step: f64,
    /// True when this iteration's direction was steepest descent.
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    /// Total objective-and-gradient evaluations.
    pub evaluations: usize,
}

impl SolverTrace {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("trace has the initial record")
    }

    /// True when no accepted iteration increased the objective by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + slack)
    }
}

/// Initial sequence from per-window sample covariances `S_t = XᵀX/n_t`:
/// column `j` of `Y_t` is `√λ_j v_j` for the top `r` eigenpairs, and
/// `D_t = diag(S_t)` floored at `1e−6·mean(diag S_t)`.
pub fn init_sequence(data: &WindowedDataset, r: usize) -> Result<PrecisionSequence> {
    if r == 0 {
        return Err(Error::InvalidParameter("rank must be at least 1".into()));
    }
    let points = data
        .windows()
        .iter()
        .enumerate()
        .map(|(t, x)| init_window(t, x, r))
        .collect::<Result<Vec<_>>>()?;
    PrecisionSequence::new(points)
}

fn init_window(t: usize, x: &DMatrix<f64>, r: usize) -> Result<FactorPoint> {
    let (n, p) = x.shape();
    let mut s = x.tr_mul(x) / n as f64;
    linalg::symmetrize(&mut s);
    let (values, vectors) = linalg::sym_eigen(&s);
    let lmax = values[p - 1];
    let available = values.iter().filter(|&&l| l > 0.0 && l > RANK_TOL * lmax).count();
    if available < r || r > p {
        return Err(Error::InsufficientRank {
            window: t,
            requested: r,
            available,
        });
    }
    let y = DMatrix::from_fn(p, r, |i, j| {
        let k = p - 1 - j;
        values[k].sqrt() * vectors[(i, k)]
    });
    let diag = s.diagonal();
    let floor = 1e-6 * diag.mean();
    let d = DVector::from_iterator(p, diag.iter().map(|&v| v.max(floor)));
    FactorPoint::new(y, d)
}

fn product_inner(seq: &PrecisionSequence, a: &[Horizontal], b: &[Horizontal]) -> f64 {
    seq.points()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(p, (x, y))| metric_inner_unchecked(p, x.as_tangent(), y.as_tangent()))
        .sum()
}

fn grad_norms(seq: &PrecisionSequence, g: &[Horizontal]) -> Vec<f64> {
    seq.points()
        .iter()
        .zip(g)
        .map(|(p, x)| metric_inner_unchecked(p, x.as_tangent(), x.as_tangent()).sqrt())
        .collect()
}

fn max_norm(norms: &[f64]) -> f64 {
    norms.iter().copied().fold(0.0, f64::max)
}

/// Accepted line-search step and the state at the new point.
#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub seq: PrecisionSequence,
    pub eval: Evaluation,
    pub evals: usize,
}

/// A trial point on the curve `α ↦ R_θ(αξ)`.
struct Trial {
    alpha: f64,
    phi: f64,
    dphi: f64,
    state: Option<(PrecisionSequence, Evaluation)>,
}

struct Curve<'a> {
    seq: &'a PrecisionSequence,
    direction: &'a [Horizontal],
    data: &'a WindowedDataset,
    cfg: &'a SolverConfig,
    evals: usize,
    /// Largest step whose trial point was feasible.
    max_feasible: f64,
}

impl Curve<'_> {
    /// Evaluate `φ(α) = F(R_θ(αξ))` and its exact derivative
    /// `φ′(α) = Σ_t ⟨grad F(θ_t(α)), (ξ_Y, ξ_D + α ξ_D²/D)⟩`, the velocity of
    /// the retraction curve. Infeasible trials (rank loss, loss of definiteness
    /// in a distance term) report `φ = +∞`.
    fn eval(&mut self, alpha: f64) -> Trial {
        self.evals += 1;
        let moved: Vec<Tangent> = self.direction.iter().map(|x| x.as_tangent().scale(alpha)).collect();
        let attempt = self.seq.retract(&moved).and_then(|next| {
            let e = objective_value_and_rgrad(&next, self.data, &self.cfg.model, self.cfg.exec())?;
            Ok((next, e))
        });
        match attempt {
            Ok((next, e)) if e.value.is_finite() => {
                self.max_feasible = self.max_feasible.max(alpha);
                let mut dphi = 0.0;
                for (t, (p, g)) in next.points().iter().zip(&e.grad).enumerate() {
                    let xi = self.direction[t].as_tangent();
                    let base_d = self.seq.points()[t].d();
                    let vel_d = DVector::from_fn(xi.d.len(), |i, _| {
                        xi.d[i] + alpha * xi.d[i] * xi.d[i] / base_d[i]
                    });
                    let vel = Tangent::new(xi.y.clone(), vel_d);
                    dphi += metric_inner_unchecked(p, g.as_tangent(), &vel);
                }
                Trial {
                    alpha,
                    phi: e.value,
                    dphi,
                    state: Some((next, e)),
                }
            }
            _ => Trial {
                alpha,
                phi: f64::INFINITY,
                dphi: f64::NAN,
                state: None,
            },
        }
    }
}

/// Minimiser of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`,
/// falling back to the quadratic through `(a, fa, da)` and `(b, fb)`, then
/// to bisection; always clamped to the inner 80% of the interval.
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = (a.min(b), a.max(b));
    let width = right - left;
    let clamp = |x: f64| {
        if x.is_finite() {
            x.clamp(left + 0.1 * width, right - 0.1 * width)
        } else {
            0.5 * (a + b)
        }
    };
    if !hi.phi.is_finite() {
        return 0.5 * (a + b);
    }
    if hi.dphi.is_finite() {
        let d1 = lo.dphi + hi.dphi - 3.0 * (lo.phi - hi.phi) / (a - b);
        let disc = d1 * d1 - lo.dphi * hi.dphi;
        if disc >= 0.0 {
            let d2 = (b - a).signum() * disc.sqrt();
            let x = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
            if x.is_finite() {
                return clamp(x);
            }
        }
    }
    let h = b - a;
    let denom = 2.0 * (hi.phi - lo.phi - lo.dphi * h);
    if denom > 0.0 {
        return clamp(a - lo.dphi * h * h / denom);
    }
    0.5 * (a + b)
}

/// Strong Wolfe line search (bracketing then zoom) along `α ↦ R_θ(αξ)`,
/// one `α` for all windows.
///
/// Accepts `α` with `φ(α) ≤ φ(0) + c₁αφ′(0)` and `|φ′(α)| ≤ c₂|φ′(0)|`.
/// Trial points where the retraction or the objective fails are treated as
/// `φ = +∞`, which shrinks the step.
pub fn wolfe_line_search(
    seq: &PrecisionSequence,
    current: &Evaluation,
    direction: &[Horizontal],
    data: &WindowedDataset,
    cfg: &SolverConfig,
    alpha0: f64,
) -> Result<LineSearchResult> {
    let dphi0 = product_inner(seq, &current.grad, direction);
    if !(dphi0 < 0.0) {
        return Err(Error::NotDescent(dphi0));
    }
    let phi0 = current.value;
    let (c1, c2) = (cfg.wolfe_c1, cfg.wolfe_c2);
    let mut curve = Curve {
        seq,
        direction,
        data,
        cfg,
        evals: 0,
        max_feasible: 0.0,
    };
    let armijo = |t: &Trial| t.phi <= phi0 + c1 * t.alpha * dphi0;
    let curvature = |t: &Trial| t.dphi.abs() <= -c2 * dphi0;
    let fail = |curve: &Curve, reason: &str| Error::LineSearch {
        iteration: 0,
        evals: curve.evals,
        max_decrease: -dphi0 * curve.max_feasible,
        reason: reason.to_string(),
    };
    let done = |t: Trial, evals: usize| {
        let (seq, eval) = t.state.expect("accepted trial is feasible");
        Ok(LineSearchResult {
            alpha: t.alpha,
            seq,
            eval,
            evals,
        })
    };

    let mut prev = Trial {
        alpha: 0.0,
        phi: phi0,
        dphi: dphi0,
        state: None,
    };
    let mut alpha = if alpha0.is_finite() && alpha0 > 0.0 { alpha0 } else { 1.0 };
    let (mut lo, mut hi) = loop {
        if curve.evals >= cfg.ls_max_evals {
            return Err(fail(&curve, "evaluation budget exhausted while bracketing"));
        }
        let t = curve.eval(alpha);
        if !armijo(&t) || (prev.alpha > 0.0 && t.phi >= prev.phi) {
            break (prev, t);
        }
        if curvature(&t) {
            let evals = curve.evals;
            return done(t, evals);
        }
        if t.dphi >= 0.0 {
            break (t, prev);
        }
        alpha = 2.0 * t.alpha;
        prev = t;
    };

    loop {
        if curve.evals >= cfg.ls_max_evals {
            return Err(fail(&curve, "evaluation budget exhausted while zooming"));
        }
        let a = interpolate(&lo, &hi);
        if (hi.alpha - lo.alpha).abs() <= f64::EPSILON * lo.alpha.max(hi.alpha) {
            return Err(fail(&curve, "bracket collapsed below machine precision"));
        }
        let t = curve.eval(a);
        if !armijo(&t) || t.phi >= lo.phi {
            hi = t;
            continue;
        }
        if curvature(&t) {
            let evals = curve.evals;
            return done(t, evals);
        }
        if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = t;
    }
}

/// Fit from the covariance-based initializer.
pub fn fit(data: &WindowedDataset, cfg: &SolverConfig) -> Result<(PrecisionSequence, SolverTrace)> {
    cfg.validate()?;
    let init = init_sequence(data, cfg.model.rank)?;
    fit_from(init, data, cfg)
}

/// Fit from a given starting sequence.
pub fn fit_from(
    init: PrecisionSequence,
    data: &WindowedDataset,
    cfg: &SolverConfig,
) -> Result<(PrecisionSequence, SolverTrace)> {
    cfg.validate()?;
    cfg.model.check_compatible(&init, data)?;
    let exec = cfg.exec();
    let mut seq = init;
    let mut eval = objective_value_and_rgrad(&seq, data, &cfg.model, exec)?;
    let mut evaluations = 1;
    let mut gmax = max_norm(&grad_norms(&seq, &eval.grad));
    let mut records = vec![TraceRecord {
        iter: 0,
        objective: eval.value,
        max_grad_norm: gmax,
        step: 0.0,
        restarted: false,
    }];
    let finish = |seq, records, termination, evaluations| {
        Ok((
            seq,
            SolverTrace {
                records,
                termination,
                evaluations,
            },
        ))
    };
    if cfg.max_iter == 0 {
        return finish(seq, records, Termination::Budget, evaluations);
    }
    if gmax < cfg.eps_tol {
        return finish(seq, records, Termination::Converged, evaluations);
    }

    let steepest = |g: &[Horizontal]| -> Vec<Horizontal> { g.iter().map(|x| x.scale(-1.0)).collect() };
    let mut direction = steepest(&eval.grad);
    let mut restarted = true;
    let mut alpha0 = 1.0;

    for iter in 1..=cfg.max_iter {
        let mut attempt = wolfe_line_search(&seq, &eval, &direction, data, cfg, alpha0);
        if let (Err(Error::LineSearch { evals, .. }), false) = (&attempt, restarted) {
            evaluations += evals;
            direction = steepest(&eval.grad);
            restarted = true;
            attempt = wolfe_line_search(&seq, &eval, &direction, data, cfg, 1.0);
        }
        let ls = match attempt {
            Ok(ls) => ls,
            // No trial step could change F by more than its rounding
            // resolution: the same floor the stagnation guard detects.
            Err(Error::LineSearch {
                evals, max_decrease, ..
            }) if max_decrease <= cfg.stagnation_tol * eval.value.abs().max(1.0) => {
                evaluations += evals;
                return finish(seq, records, Termination::Stagnation, evaluations);
            }
            Err(e) => return Err(with_iteration(e, iter)),
        };
        evaluations += ls.evals;
        let (prev_seq, prev_eval) = (std::mem::replace(&mut seq, ls.seq), std::mem::replace(&mut eval, ls.eval));
        let norms = grad_norms(&seq, &eval.grad);
        gmax = max_norm(&norms);
        records.push(TraceRecord {
            iter,
            objective: eval.value,
            max_grad_norm: gmax,
            step: ls.alpha,
            restarted,
        });
        alpha0 = ls.alpha;

        if gmax < cfg.eps_tol {
            return finish(seq, records, Termination::Converged, evaluations);
        }
        let w = cfg.stagnation_window;
        if records.len() > w {
            let old = records[records.len() - 1 - w].objective;
            if (old - eval.value).abs() <= cfg.stagnation_tol * eval.value.abs().max(1.0) {
                return finish(seq, records, Termination::Stagnation, evaluations);
            }
        }
        if iter == cfg.max_iter {
            break;
        }

        // Hestenes–Stiefel per window, all inner products at the new point.
        let mut next = Vec::with_capacity(seq.len());
        for (t, dir) in direction.iter().enumerate() {
            let (from, to) = (&prev_seq.points()[t], &seq.points()[t]);
            let g = &eval.grad[t];
            let tg = transport(from, to, &prev_eval.grad[t])?;
            let txi = transport(from, to, dir)?;
            let diff = Tangent::new(&g.as_tangent().y - &tg.as_tangent().y, &g.as_tangent().d - &tg.as_tangent().d);
            let num = metric_inner_unchecked(to, g.as_tangent(), &diff);
            let den = metric_inner_unchecked(to, txi.as_tangent(), &diff);
            let scale = metric_inner_unchecked(to, txi.as_tangent(), txi.as_tangent()).sqrt()
                * metric_inner_unchecked(to, &diff, &diff).sqrt();
            let beta = if den.abs() > f64::EPSILON * scale && den.is_finite() {
                (num / den).max(0.0)
            } else {
                0.0
            };
            next.push(Horizontal::lin_comb(-1.0, g, beta, &txi));
        }
        let slope = product_inner(&seq, &eval.grad, &next);
        let gsq = product_inner(&seq, &eval.grad, &eval.grad);
        if slope <= -cfg.restart_c0 * gsq {
            direction = next;
            restarted = false;
        } else {
            direction = steepest(&eval.grad);
            restarted = true;
        }
    }
    finish(seq, records, Termination::Budget, evaluations)
}

fn with_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::LineSearch {
            evals,
            max_decrease,
            reason,
            ..
        } => Error::LineSearch {
            iteration,
            evals,
            max_decrease,
            reason,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::is_horizontal;
    use crate::model::{objective_value, EllipticalFamily};
    use crate::testutil::*;

    fn lrad_data(seed: u64, p: usize, r: usize, t: usize, n: usize) -> WindowedDataset {
        let mut rng = seeded(seed);
        let truth = random_point(&mut rng, p, r);
        let cov = crate::spd::materialize(&truth).into_inner().try_inverse().unwrap();
        let l = cov.cholesky().unwrap().l();
        let windows = (0..t).map(|_| gaussian(&mut rng, n, p) * l.transpose()).collect();
        WindowedDataset::new(windows).unwrap()
    }

    fn config(r: usize, mu: f64) -> SolverConfig {
        SolverConfig {
            model: ModelConfig {
                rank: r,
                mu,
                lambda: 0.01,
                epsilon: 1e-3,
                family: EllipticalFamily::Gaussian,
            },
            ..SolverConfig::default()
        }
    }

    #[test]
    fn init_examples() {
        // Orthogonal design: S = I exactly.
        let x = DMatrix::identity(4, 4) * 2.0;
        let data = WindowedDataset::new(vec![x]).unwrap();
        let seq = init_sequence(&data, 1).unwrap();
        let pt = &seq.points()[0];
        assert!((pt.y().norm() - 1.0).abs() < 1e-12);
        assert!((pt.d() - DVector::from_element(4, 1.0)).amax() < 1e-12);

        let one = WindowedDataset::new(vec![DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 0.5])]).unwrap();
        assert!(init_sequence(&one, 1).is_ok());
        assert!(matches!(
            init_sequence(&one, 2),
            Err(Error::InsufficientRank { window: 0, requested: 2, available: 1 })
        ));
    }

    #[test]
    fn init_reproduces_top_spectrum() {
        let mut rng = seeded(2);
        let x = gaussian(&mut rng, 40, 20);
        let data = WindowedDataset::new(vec![x.clone()]).unwrap();
        let seq = init_sequence(&data, 3).unwrap();
        let m = crate::spd::materialize(&seq.points()[0]);
        assert!(m.min_eigenvalue() > 0.0);
        assert!(m.as_matrix().iter().all(|v| v.is_finite()));
        let s = x.tr_mul(&x) / 40.0;
        let top = linalg::sym_eigenvalues(&s);
        let yy = seq.points()[0].y().tr_mul(seq.points()[0].y());
        let got = linalg::sym_eigenvalues(&yy);
        for k in 0..3 {
            assert!((got[k] - top[17 + k]).abs() < 1e-10 * top[19]);
        }
    }

    #[test]
    fn line_search_accepts_wolfe_step() {
        let data = lrad_data(3, 6, 2, 1, 40);
        let cfg = config(2, 0.0);
        let seq = init_sequence(&data, 2).unwrap();
        let eval = objective_value_and_rgrad(&seq, &data, &cfg.model, Exec::Sequential).unwrap();
        let dir: Vec<Horizontal> = eval.grad.iter().map(|g| g.scale(-1.0)).collect();
        let ls = wolfe_line_search(&seq, &eval, &dir, &data, &cfg, 1.0).unwrap();
        let slope = product_inner(&seq, &eval.grad, &dir);
        assert!(ls.alpha > 0.0 && ls.evals <= cfg.ls_max_evals);
        assert!(ls.eval.value <= eval.value + cfg.wolfe_c1 * ls.alpha * slope);
        assert!(ls.eval.value < eval.value);
    }

    #[test]
    fn line_search_rejects_ascent_direction() {
        let data = lrad_data(4, 5, 1, 1, 20);
        let cfg = config(1, 0.0);
        let seq = init_sequence(&data, 1).unwrap();
        let eval = objective_value_and_rgrad(&seq, &data, &cfg.model, Exec::Sequential).unwrap();
        let up = eval.grad.clone();
        assert!(matches!(
            wolfe_line_search(&seq, &eval, &up, &data, &cfg, 1.0),
            Err(Error::NotDescent(_))
        ));
    }

    #[test]
    fn zero_budget_returns_initializer() {
        let data = lrad_data(5, 6, 2, 2, 30);
        let cfg = SolverConfig { max_iter: 0, ..config(2, 0.5) };
        let (seq, trace) = fit(&data, &cfg).unwrap();
        assert_eq!(seq, init_sequence(&data, 2).unwrap());
        assert_eq!(trace.termination, Termination::Budget);
        assert_eq!(trace.records.len(), 1);
    }

    #[test]
    fn single_window_fit_converges() {
        let data = lrad_data(6, 8, 2, 1, 200);
        // Unpenalized: the λ/ε curvature of the sparsity surrogate makes the
        // penalized problem stiff enough to stall near the gradient tolerance.
        let mut cfg = config(2, 0.0);
        cfg.model.lambda = 0.0;
        let (_, trace) = fit(&data, &cfg).unwrap();
        assert!(trace.is_monotone(1e-12));
        assert_eq!(trace.termination, Termination::Converged, "{:?}", trace.final_record());
        assert!(trace.final_record().max_grad_norm < 1e-6);
    }

    #[test]
    fn rounding_floor_ends_in_stagnation() {
        // A gradient tolerance no run can reach: the fit must stop at the
        // floating-point floor without reporting a line-search failure.
        let data = lrad_data(6, 8, 2, 1, 200);
        let mut cfg = config(2, 0.0);
        cfg.model.lambda = 0.0;
        cfg.eps_tol = 1e-30;
        cfg.max_iter = 2000;
        let (_, trace) = fit(&data, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::Stagnation);
        assert!(trace.is_monotone(1e-12));
    }

    #[test]
    fn strong_coupling_reduces_window_distances() {
        let data = lrad_data(7, 6, 2, 1, 60);
        let copies = WindowedDataset::new(vec![data.window(0).clone(); 4]).unwrap();
        // Distinct starting points so the uncoupled fit is not trivially constant.
        let mut rng = seeded(70);
        let init = PrecisionSequence::new((0..4).map(|_| random_point(&mut rng, 6, 2)).collect()).unwrap();
        let spread = |cfg: &SolverConfig| {
            let budget = SolverConfig { max_iter: 40, ..*cfg };
            let (seq, _) = fit_from(init.clone(), &copies, &budget).unwrap();
            let dense = seq.materialize();
            (0..3)
                .map(|t| crate::spd::geodesic_distance(&dense[t], &dense[t + 1]).unwrap())
                .fold(0.0, f64::max)
        };
        assert!(spread(&config(2, 10.0)) < spread(&config(2, 0.0)));
    }

    #[test]
    fn directions_are_horizontal_and_trace_consistent() {
        let data = lrad_data(8, 7, 2, 3, 50);
        let cfg = SolverConfig { max_iter: 15, ..config(2, 0.5) };
        let (seq, trace) = fit(&data, &cfg).unwrap();
        assert!(trace.is_monotone(1e-12));
        let v = objective_value(&seq, &data, &cfg.model).unwrap();
        assert_eq!(v, trace.final_record().objective);
        let eval = objective_value_and_rgrad(&seq, &data, &cfg.model, Exec::Sequential).unwrap();
        for (p, g) in seq.points().iter().zip(&eval.grad) {
            assert!(is_horizontal(p, g.as_tangent()));
        }
    }

    #[test]
    fn running_min_gradient_bound_does_not_diverge() {
        let data = lrad_data(9, 8, 2, 2, 80);
        let cfg = SolverConfig { max_iter: 60, ..config(2, 0.5) };
        let (_, trace) = fit(&data, &cfg).unwrap();
        let mut best = f64::INFINITY;
        let mut at10 = None;
        for (s, rec) in trace.records.iter().enumerate() {
            best = best.min(rec.max_grad_norm.powi(2));
            let scaled = best * (s + 1) as f64;
            if s == 10 {
                at10 = Some(scaled);
            }
            if let Some(a) = at10 {
                assert!(scaled <= 10.0 * a, "s={s}: {scaled:e} vs {a:e}");
            }
        }
    }

    #[test]
    fn deterministic_runs_are_bitwise_identical() {
        let data = lrad_data(10, 6, 2, 3, 30);
        let cfg = SolverConfig { max_iter: 20, deterministic: true, ..config(2, 0.5) };
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&data, &cfg).unwrap();
        assert_eq!(a, b);
        let par = SolverConfig { deterministic: false, exec: Exec::Parallel, ..cfg };
        assert_eq!(fit(&data, &par).unwrap(), a);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { wolfe_c1: 0.9, wolfe_c2: 0.1, ..SolverConfig::default() }.validate().is_err());
        assert!(SolverConfig { eps_tol: 0.0, ..SolverConfig::default() }.validate().is_err());
        let mut bad = SolverConfig::default();
        bad.model.family = EllipticalFamily::StudentT { nu: 2.0 };
        assert!(bad.validate().is_err());
    }
}
