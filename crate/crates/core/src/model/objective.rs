//! The full objective over a window sequence and its Riemannian gradient.
//!
//! Per-window terms (likelihood, penalty) and per-pair terms (squared
//! geodesic distance between windows `t` and `t+1`) are independent given
//! the current sequence, so both loops go through [`Exec`]. Window `t`
//! collects the first-argument gradient of pair `(t, t+1)` and the
//! second-argument gradient of pair `(t−1, t)`; the first and last windows
//! have only one of the two.

use nalgebra::DMatrix;

use super::terms::{nll_egrad_dense, nll_parts, penalty_egrad, penalty_parts};
use super::{ModelConfig, PrecisionSequence, WindowedDataset};
use crate::error::Result;
use crate::manifold::{action_to_rgrad, egrad_to_rgrad, EgradAction, Horizontal};
use crate::par::Exec;
use crate::spd::{geodesic_grad_first, geodesic_grad_second, materialize, GeodesicPair, SpdMatrix, Woodbury};

/// Objective value with the per-window Riemannian gradients.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<Horizontal>,
}

struct WindowTerm {
    dense: SpdMatrix,
    value: f64,
    action: Option<EgradAction>,
}

struct PairTerm {
    dist2: f64,
    first: Option<EgradAction>,
    second: Option<EgradAction>,
}

fn window_term(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
    t: usize,
    want_grad: bool,
) -> Result<WindowTerm> {
    let theta = &seq.points()[t];
    let wb = Woodbury::new(theta)?;
    let (nll_value, mut action) = nll_parts(theta, &wb, data.window(t), cfg.family, want_grad);
    let dense = materialize(theta);
    let mut value = nll_value;
    if cfg.lambda > 0.0 {
        let (pen, grad) = penalty_parts(dense.as_matrix(), cfg.epsilon, want_grad);
        value += cfg.lambda * pen;
        if let (Some(a), Some(g)) = (action.as_mut(), grad) {
            a.add_scaled(cfg.lambda, &EgradAction::from_dense(theta, &g)?);
        }
    }
    Ok(WindowTerm {
        dense,
        value,
        action,
    })
}

fn pair_term(
    seq: &PrecisionSequence,
    windows: &[WindowTerm],
    t: usize,
    want_grad: bool,
) -> Result<PairTerm> {
    let pair = GeodesicPair::new(&windows[t].dense, &windows[t + 1].dense)?;
    let (first, second) = if want_grad {
        (
            Some(pair.first_action(seq.points()[t].y())),
            Some(pair.second_action(seq.points()[t + 1].y())),
        )
    } else {
        (None, None)
    };
    Ok(PairTerm {
        dist2: pair.dist2(),
        first,
        second,
    })
}

fn evaluate(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
    exec: Exec,
    want_grad: bool,
) -> Result<(f64, Option<Vec<Horizontal>>)> {
    cfg.check_compatible(seq, data)?;
    let n = seq.len();
    let windows = exec.try_map(n, |t| window_term(seq, data, cfg, t, want_grad))?;
    let pairs = if cfg.mu > 0.0 && n > 1 {
        exec.try_map(n - 1, |t| pair_term(seq, &windows, t, want_grad))?
    } else {
        Vec::new()
    };

    let mut value: f64 = windows.iter().map(|w| w.value).sum();
    value += cfg.mu * pairs.iter().map(|p| p.dist2).sum::<f64>();
    if !want_grad {
        return Ok((value, None));
    }

    let mut grads = Vec::with_capacity(n);
    for (t, w) in windows.into_iter().enumerate() {
        let mut action = w.action.expect("gradient requested");
        if let Some(fwd) = pairs.get(t).and_then(|p| p.first.as_ref()) {
            action.add_scaled(cfg.mu, fwd);
        }
        if let Some(bwd) = t.checked_sub(1).and_then(|s| pairs.get(s)).and_then(|p| p.second.as_ref()) {
            action.add_scaled(cfg.mu, bwd);
        }
        grads.push(action_to_rgrad(&seq.points()[t], &action)?);
    }
    Ok((value, Some(grads)))
}

/// `F(θ_1..θ_T)`.
pub fn objective_value(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
) -> Result<f64> {
    Ok(evaluate(seq, data, cfg, Exec::default(), false)?.0)
}

/// Per-window Riemannian gradients of `F`.
pub fn objective_rgrad(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
) -> Result<Vec<Horizontal>> {
    Ok(objective_value_and_rgrad(seq, data, cfg, Exec::default())?.grad)
}

/// Value and gradient sharing one materialisation and one pair
/// decomposition per window.
pub fn objective_value_and_rgrad(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
    exec: Exec,
) -> Result<Evaluation> {
    let (value, grad) = evaluate(seq, data, cfg, exec, true)?;
    Ok(Evaluation {
        value,
        grad: grad.expect("gradient requested"),
    })
}

/// Dense Euclidean gradients `Γ_t` (reference path).
pub fn objective_egrad_dense(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
) -> Result<Vec<DMatrix<f64>>> {
    cfg.check_compatible(seq, data)?;
    let dense = seq.materialize();
    let n = seq.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut g = nll_egrad_dense(&seq.points()[t], data.window(t), cfg.family)?;
        g += penalty_egrad(dense[t].as_matrix(), cfg.epsilon) * cfg.lambda;
        if cfg.mu > 0.0 {
            if t + 1 < n {
                g += geodesic_grad_first(&dense[t], &dense[t + 1])? * cfg.mu;
            }
            if t > 0 {
                g += geodesic_grad_second(&dense[t - 1], &dense[t])? * cfg.mu;
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Riemannian gradients from the dense Euclidean path.
pub fn objective_rgrad_dense(
    seq: &PrecisionSequence,
    data: &WindowedDataset,
    cfg: &ModelConfig,
) -> Result<Vec<Horizontal>> {
    let eg = objective_egrad_dense(seq, data, cfg)?;
    seq.points()
        .iter()
        .zip(&eg)
        .map(|(p, g)| egrad_to_rgrad(p, g))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{metric_inner, metric_norm, Tangent};
    use crate::model::{nll, penalty, EllipticalFamily};
    use crate::testutil::*;
    use rand::Rng;

    fn instance(rng: &mut impl Rng, p: usize, r: usize, t: usize, n: usize) -> (PrecisionSequence, WindowedDataset) {
        let seq = PrecisionSequence::new((0..t).map(|_| random_point(rng, p, r)).collect()).unwrap();
        let data = WindowedDataset::new((0..t).map(|_| gaussian(rng, n, p)).collect()).unwrap();
        (seq, data)
    }

    fn cfg(r: usize, mu: f64) -> ModelConfig {
        ModelConfig {
            rank: r,
            mu,
            lambda: 0.05,
            epsilon: 0.05,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn single_window_has_no_temporal_term() {
        let mut rng = seeded(1);
        let (seq, data) = instance(&mut rng, 5, 2, 1, 8);
        let c = cfg(2, 3.0);
        let theta = &seq.points()[0];
        let want = nll(theta, data.window(0), c.family).unwrap()
            + c.lambda * penalty(materialize(theta).as_matrix(), c.epsilon);
        assert!((objective_value(&seq, &data, &c).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn zero_mu_is_sum_of_windows() {
        let mut rng = seeded(2);
        let (seq, data) = instance(&mut rng, 5, 2, 3, 8);
        let c = cfg(2, 0.0);
        let total = objective_value(&seq, &data, &c).unwrap();
        let parts: f64 = (0..3)
            .map(|t| {
                let s = PrecisionSequence::new(vec![seq.points()[t].clone()]).unwrap();
                let d = WindowedDataset::new(vec![data.window(t).clone()]).unwrap();
                objective_value(&s, &d, &c).unwrap()
            })
            .sum();
        assert_eq!(total, parts);
    }

    #[test]
    fn constant_sequence_has_no_temporal_contribution() {
        let mut rng = seeded(3);
        let theta = random_point(&mut rng, 6, 2);
        let seq = PrecisionSequence::new(vec![theta.clone(); 3]).unwrap();
        let data = WindowedDataset::new((0..3).map(|_| gaussian(&mut rng, 7, 6)).collect()).unwrap();
        let with = objective_value_and_rgrad(&seq, &data, &cfg(2, 5.0), Exec::Sequential).unwrap();
        let without = objective_value_and_rgrad(&seq, &data, &cfg(2, 0.0), Exec::Sequential).unwrap();
        assert!((with.value - without.value).abs() < 1e-9);
        for (a, b) in with.grad.iter().zip(&without.grad) {
            assert!((a.as_tangent() - b.as_tangent()).max_abs() < 1e-7);
        }
    }

    #[test]
    fn structured_gradient_matches_dense_reference() {
        let mut rng = seeded(4);
        let (seq, data) = instance(&mut rng, 8, 2, 3, 15);
        for fam in [EllipticalFamily::Gaussian, EllipticalFamily::StudentT { nu: 3.0 }] {
            let c = ModelConfig { family: fam, ..cfg(2, 0.7) };
            let fast = objective_rgrad(&seq, &data, &c).unwrap();
            let dense = objective_rgrad_dense(&seq, &data, &c).unwrap();
            for (a, b) in fast.iter().zip(&dense) {
                let scale = b.as_tangent().max_abs();
                assert!((a.as_tangent() - b.as_tangent()).max_abs() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn gradient_matches_retraction_finite_differences() {
        let mut rng = seeded(5);
        let (seq, data) = instance(&mut rng, 8, 2, 3, 15);
        let c = cfg(2, 0.5);
        let eval = objective_value_and_rgrad(&seq, &data, &c, Exec::Sequential).unwrap();
        for _ in 0..20 {
            let xi: Vec<Tangent> = seq
                .points()
                .iter()
                .map(|p| random_horizontal(&mut rng, p).into_tangent())
                .collect();
            let h = 1e-5;
            let step = |s: f64| {
                let moved: Vec<Tangent> = xi.iter().map(|x| x.scale(s)).collect();
                objective_value(&seq.retract(&moved).unwrap(), &data, &c).unwrap()
            };
            let fd = (step(h) - step(-h)) / (2.0 * h);
            let mut an = 0.0;
            let mut gn = 0.0;
            let mut xn = 0.0;
            for ((p, g), x) in seq.points().iter().zip(&eval.grad).zip(&xi) {
                an += metric_inner(p, g.as_tangent(), x).unwrap();
                gn += metric_norm(p, g.as_tangent()).unwrap().powi(2);
                xn += metric_norm(p, x).unwrap().powi(2);
            }
            let rel = (fd - an).abs() / (gn.sqrt() * xn.sqrt());
            assert!(rel <= 1e-4, "fd {fd} an {an} rel {rel:e}");
        }
    }

    #[test]
    fn value_and_gradient_norm_are_gauge_invariant() {
        let mut rng = seeded(6);
        let (seq, data) = instance(&mut rng, 7, 3, 3, 10);
        let c = cfg(3, 0.5);
        let moved = PrecisionSequence::new(
            seq.points()
                .iter()
                .map(|p| p.with_gauge(&random_orthogonal(&mut rng, 3)).unwrap())
                .collect(),
        )
        .unwrap();
        let a = objective_value_and_rgrad(&seq, &data, &c, Exec::Sequential).unwrap();
        let b = objective_value_and_rgrad(&moved, &data, &c, Exec::Sequential).unwrap();
        assert!((a.value - b.value).abs() <= 1e-10 * a.value.abs());
        for t in 0..3 {
            let na = metric_norm(&seq.points()[t], a.grad[t].as_tangent()).unwrap();
            let nb = metric_norm(&moved.points()[t], b.grad[t].as_tangent()).unwrap();
            assert!((na - nb).abs() <= 1e-10 * na);
        }
    }

    fn perturbed_window(data: &WindowedDataset, t: usize, rng: &mut impl Rng) -> WindowedDataset {
        let mut w = data.windows().to_vec();
        w[t] = gaussian(rng, w[t].nrows(), w[t].ncols());
        WindowedDataset::new(w).unwrap()
    }

    fn perturbed_point(seq: &PrecisionSequence, t: usize, rng: &mut impl Rng) -> PrecisionSequence {
        let mut pts = seq.points().to_vec();
        pts[t] = random_point(rng, seq.dim(), seq.rank());
        PrecisionSequence::new(pts).unwrap()
    }

    #[test]
    fn zero_mu_gradient_is_window_local() {
        let mut rng = seeded(7);
        let (seq, data) = instance(&mut rng, 6, 2, 3, 9);
        let c = cfg(2, 0.0);
        let base = objective_rgrad(&seq, &data, &c).unwrap();
        let mut other = perturbed_window(&data, 0, &mut rng);
        other = perturbed_window(&other, 2, &mut rng);
        let moved = perturbed_point(&perturbed_point(&seq, 0, &mut rng), 2, &mut rng);
        let g = objective_rgrad(&moved, &other, &c).unwrap();
        assert_eq!(g[1], base[1]);
    }

    #[test]
    fn temporal_gradient_touches_only_neighbours() {
        let mut rng = seeded(8);
        let (seq, data) = instance(&mut rng, 6, 2, 5, 9);
        let c = cfg(2, 0.8);
        let base = objective_rgrad(&seq, &data, &c).unwrap();
        let moved = perturbed_point(&seq, 2, &mut rng);
        let g = objective_rgrad(&moved, &data, &c).unwrap();
        assert_eq!(g[0], base[0]);
        assert_eq!(g[4], base[4]);
        assert_ne!(g[1], base[1]);
        assert_ne!(g[3], base[3]);
    }

    #[test]
    fn small_gradient_step_decreases_objective() {
        let mut rng = seeded(9);
        let (seq, data) = instance(&mut rng, 6, 2, 3, 20);
        let c = cfg(2, 0.5);
        let eval = objective_value_and_rgrad(&seq, &data, &c, Exec::Sequential).unwrap();
        let step: Vec<Tangent> = eval.grad.iter().map(|g| g.as_tangent().scale(-1e-4)).collect();
        let next = objective_value(&seq.retract(&step).unwrap(), &data, &c).unwrap();
        assert!(next < eval.value);
    }

    #[test]
    fn execution_policies_agree_bitwise() {
        let mut rng = seeded(10);
        let (seq, data) = instance(&mut rng, 6, 2, 4, 9);
        let c = cfg(2, 0.5);
        let a = objective_value_and_rgrad(&seq, &data, &c, Exec::Sequential).unwrap();
        let b = objective_value_and_rgrad(&seq, &data, &c, Exec::Parallel).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.grad, b.grad);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let mut rng = seeded(11);
        let (seq, data) = instance(&mut rng, 6, 2, 3, 9);
        assert!(objective_value(&seq, &data, &cfg(3, 0.5)).is_err());
        let short = WindowedDataset::new(data.windows()[..2].to_vec()).unwrap();
        assert!(objective_value(&seq, &short, &cfg(2, 0.5)).is_err());
    }
}
