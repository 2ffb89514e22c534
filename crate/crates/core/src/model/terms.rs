//! Per-window terms: the elliptical negative log-likelihood and the smooth
//! off-diagonal penalty.

use nalgebra::{DMatrix, DVector};

use super::EllipticalFamily;
use crate::error::{check_shape, Result};
use crate::manifold::{EgradAction, FactorPoint};
use crate::spd::{materialize, Woodbury};

/// Quadratic forms `s_i = x_iᵀΘx_i` for every row, plus `XY` for reuse.
fn quadratic_forms(theta: &FactorPoint, x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let xy = x * theta.y();
    let mut s = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        let low: f64 = xy.row(i).norm_squared();
        let diag: f64 = x.row(i).iter().zip(theta.d().iter()).map(|(v, d)| d * v * v).sum();
        s[i] = low + diag;
    }
    (s, xy)
}

/// Value and (optionally) the structured Euclidean gradient of the
/// likelihood term, given the window's Woodbury factors.
///
/// Samples are reduced in row order, so results are reproducible bit for bit.
pub(crate) fn nll_parts(
    theta: &FactorPoint,
    wb: &Woodbury,
    x: &DMatrix<f64>,
    family: EllipticalFamily,
    want_grad: bool,
) -> (f64, Option<EgradAction>) {
    let (n, p) = x.shape();
    let (s, xy) = quadratic_forms(theta, x);
    let mean_rho = s.iter().map(|&si| family.rho(si, p)).sum::<f64>() / n as f64;
    let value = -0.5 * wb.logdet() + mean_rho;
    if !want_grad {
        return (value, None);
    }
    // ½·(1/n)·Σ u_i x_i x_iᵀ acting on Y, and its diagonal.
    let w = s.map(|si| 0.5 * family.u(si, p) / n as f64);
    let mut wxy = xy;
    for (i, mut row) in wxy.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut action = wb.inverse_action(-0.5);
    action.gy += x.tr_mul(&wxy);
    for i in 0..n {
        for (k, v) in x.row(i).iter().enumerate() {
            action.diag[k] += w[i] * v * v;
        }
    }
    (value, Some(action))
}

/// `−½ log det Θ + (1/n) Σ_i ρ(x_iᵀΘx_i)`.
pub fn nll(theta: &FactorPoint, x: &DMatrix<f64>, family: EllipticalFamily) -> Result<f64> {
    check_shape("window", (x.nrows(), theta.dim()), x.shape())?;
    let wb = Woodbury::new(theta)?;
    Ok(nll_parts(theta, &wb, x, family, false).0)
}

/// Structured Euclidean gradient `−½Θ⁻¹ + (1/2n) Σ_i u(s_i) x_i x_iᵀ`, as its
/// action on `Y` and its diagonal.
pub fn nll_egrad_action(
    theta: &FactorPoint,
    x: &DMatrix<f64>,
    family: EllipticalFamily,
) -> Result<EgradAction> {
    check_shape("window", (x.nrows(), theta.dim()), x.shape())?;
    let wb = Woodbury::new(theta)?;
    Ok(nll_parts(theta, &wb, x, family, true).1.expect("gradient requested"))
}

/// Dense Euclidean gradient of the likelihood term (reference path).
pub fn nll_egrad_dense(
    theta: &FactorPoint,
    x: &DMatrix<f64>,
    family: EllipticalFamily,
) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    check_shape("window", (n, theta.dim()), x.shape())?;
    let big = materialize(theta).into_inner();
    let inv = big
        .clone()
        .try_inverse()
        .ok_or_else(|| crate::Error::NotPositiveDefinite("dense inverse failed".into()))?;
    let mut g = inv * -0.5;
    for row in x.row_iter() {
        let xi = row.transpose();
        let s = (xi.transpose() * &big * &xi)[0];
        g += &xi * xi.transpose() * (0.5 * family.u(s, p) / n as f64);
    }
    crate::linalg::symmetrize(&mut g);
    Ok(g)
}

/// `ψ_ε(s) = ε log cosh(s/ε)`, with `x = s/ε`.
///
/// Large `|x|` uses `|x| − log 2 + log1p(e^{−2|x|})` (no overflow); small
/// `|x|` uses `log1p(2 sinh²(x/2))` (no cancellation, exact zero at 0).
pub fn penalty_scalar(s: f64, epsilon: f64) -> f64 {
    let x = (s / epsilon).abs();
    if x < 1.0 {
        epsilon * (2.0 * (0.5 * x).sinh().powi(2)).ln_1p()
    } else {
        epsilon * (x - std::f64::consts::LN_2 + (-2.0 * x).exp().ln_1p())
    }
}

/// `Σ_{q≠ℓ} ψ_ε(Θ_qℓ)` over both triangles.
pub fn penalty(theta: &DMatrix<f64>, epsilon: f64) -> f64 {
    let p = theta.nrows();
    let mut total = 0.0;
    for j in 0..p {
        for i in (j + 1)..p {
            total += penalty_scalar(theta[(i, j)], epsilon) + penalty_scalar(theta[(j, i)], epsilon);
        }
    }
    total
}

/// Euclidean gradient of [`penalty`]: `tanh(Θ_qℓ/ε)` off the diagonal, zero on it.
pub fn penalty_egrad(theta: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    let p = theta.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            0.0
        } else {
            (theta[(i, j)] / epsilon).tanh()
        }
    })
}

/// Penalty value and (optionally) its Euclidean gradient for an exactly
/// symmetric `Θ`, in one pass over the strict lower triangle.
///
/// Each pair costs one `exp`: with `e = e^{−2|x|}`,
/// `log cosh x = |x| − log 2 + log1p(e)` and `tanh|x| = (1 − e)/(1 + e)`.
pub(crate) fn penalty_parts(theta: &DMatrix<f64>, epsilon: f64, want_grad: bool) -> (f64, Option<DMatrix<f64>>) {
    let p = theta.nrows();
    let mut grad = want_grad.then(|| DMatrix::zeros(p, p));
    let mut total = 0.0;
    for j in 0..p {
        for i in (j + 1)..p {
            let s = theta[(i, j)];
            let x = (s / epsilon).abs();
            let e = (-2.0 * x).exp();
            total += if x < 1.0 {
                penalty_scalar(s, epsilon)
            } else {
                epsilon * (x - std::f64::consts::LN_2 + e.ln_1p())
            };
            if let Some(g) = grad.as_mut() {
                let t = ((1.0 - e) / (1.0 + e)).copysign(s);
                g[(i, j)] = t;
                g[(j, i)] = t;
            }
        }
    }
    (2.0 * total, grad)
}
