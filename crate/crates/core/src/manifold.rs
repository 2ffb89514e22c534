//! Geometry of the factor space: pairs `(Y, D)` with `Y` a full-column-rank
//! `p×r` matrix and `D` a positive diagonal, modulo the right action
//! `Y ↦ YO` of the orthogonal group.
//!
//! Tangent vectors are pairs `(ξ_Y, ξ_D)`. The metric is
//!
//! ```text
//! ⟨ξ, ζ⟩_θ = tr(ξ_Yᵀ ζ_Y) + Σ_i ξ_D,i ζ_D,i / D_i²
//! ```
//!
//! Directions along the gauge orbit are `(YΩ, 0)` with `Ω` skew; their
//! metric complement (the horizontal space) is characterised by `Yᵀ ξ_Y`
//! being symmetric.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_shape, Error, Result};
use crate::linalg;

/// Relative singular-value floor below which a factor is rank-deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Relative tolerance of the horizontality check.
pub const SYM_TOL: f64 = 1e-8;

/// One window's parameters: factor `Y` (`p×r`) and diagonal `D` (length `p`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPoint {
    y: DMatrix<f64>,
    d: DVector<f64>,
}

/// Fails unless the smallest singular value of `y` exceeds `RANK_TOL·σ_max`.
pub fn check_full_rank(y: &DMatrix<f64>) -> Result<()> {
    let s = linalg::singular_values(y);
    let (max, min) = (s[0], s[s.len() - 1]);
    let tolerance = RANK_TOL * max;
    if !(min.is_finite() && max > 0.0 && min > tolerance) {
        return Err(Error::RankDeficient {
            sigma_min: min,
            tolerance,
        });
    }
    Ok(())
}

impl FactorPoint {
    pub fn new(y: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let (p, r) = y.shape();
        if r == 0 || p < r {
            return Err(Error::InvalidParameter(format!(
                "factor shape {p}x{r} needs p >= r >= 1"
            )));
        }
        check_shape("FactorPoint diagonal", (p, 1), d.shape())?;
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "diagonal entries must be finite and positive, found {bad}"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("factor has non-finite entries".into()));
        }
        check_full_rank(&y)?;
        Ok(Self { y, d })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// Ambient dimension `p`.
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    /// Factor rank `r`.
    pub fn rank(&self) -> usize {
        self.y.ncols()
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DVector<f64>) {
        (self.y, self.d)
    }

    /// Representative `(YO, D)` of the same equivalence class.
    pub fn with_gauge(&self, o: &DMatrix<f64>) -> Result<Self> {
        check_shape("gauge", (self.rank(), self.rank()), o.shape())?;
        Self::new(&self.y * o, self.d.clone())
    }

    fn check_tangent(&self, xi: &Tangent) -> Result<()> {
        check_shape("tangent factor", self.y.shape(), xi.y.shape())?;
        check_shape("tangent diagonal", self.d.shape(), xi.d.shape())
    }
}

/// A tangent vector `(ξ_Y, ξ_D)`; `ξ_D` holds the diagonal of a diagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub y: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl Tangent {
    pub fn new(y: DMatrix<f64>, d: DVector<f64>) -> Self {
        Self { y, d }
    }

    pub fn zeros(p: usize, r: usize) -> Self {
        Self::new(DMatrix::zeros(p, r), DVector::zeros(p))
    }

    pub fn scale(&self, a: f64) -> Self {
        Self::new(&self.y * a, &self.d * a)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.y.amax().max(self.d.amax())
    }
}

impl Add for &Tangent {
    type Output = Tangent;
    fn add(self, rhs: &Tangent) -> Tangent {
        Tangent::new(&self.y + &rhs.y, &self.d + &rhs.d)
    }
}

impl Sub for &Tangent {
    type Output = Tangent;
    fn sub(self, rhs: &Tangent) -> Tangent {
        Tangent::new(&self.y - &rhs.y, &self.d - &rhs.d)
    }
}

impl Neg for &Tangent {
    type Output = Tangent;
    fn neg(self) -> Tangent {
        Tangent::new(-&self.y, -&self.d)
    }
}

impl Mul<f64> for &Tangent {
    type Output = Tangent;
    fn mul(self, a: f64) -> Tangent {
        self.scale(a)
    }
}

/// A tangent vector known to lie in the horizontal space of its base point.
///
/// Only produced by [`project_horizontal`], [`egrad_to_rgrad`] and friends,
/// [`Horizontal::checked`], or linear combinations of horizontal vectors at
/// the same base point.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizontal(Tangent);

impl Horizontal {
    /// Wrap `t` after verifying the horizontality invariant at `theta`.
    pub fn checked(theta: &FactorPoint, t: Tangent) -> Result<Self> {
        theta.check_tangent(&t)?;
        let res = horizontality_residual(theta, &t);
        let scale = t.y.norm();
        if res > SYM_TOL * scale.max(f64::MIN_POSITIVE) && res > 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tangent is not horizontal: ‖YᵀξY − ξYᵀY‖ = {res:e}"
            )));
        }
        Ok(Self(t))
    }

    pub fn zeros(p: usize, r: usize) -> Self {
        Self(Tangent::zeros(p, r))
    }

    pub fn as_tangent(&self) -> &Tangent {
        &self.0
    }

    pub fn into_tangent(self) -> Tangent {
        self.0
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.scale(a))
    }

    /// `a·x + b·y` for horizontal vectors at a common base point.
    pub fn lin_comb(a: f64, x: &Horizontal, b: f64, y: &Horizontal) -> Self {
        Self(Tangent::new(
            &x.0.y * a + &y.0.y * b,
            &x.0.d * a + &y.0.d * b,
        ))
    }
}

/// `‖Yᵀ ξ_Y − ξ_Yᵀ Y‖_F`; zero exactly on the horizontal space.
pub fn horizontality_residual(theta: &FactorPoint, xi: &Tangent) -> f64 {
    let m = theta.y.transpose() * &xi.y;
    linalg::asymmetry(&m)
}

/// Relative horizontality test with tolerance [`SYM_TOL`].
pub fn is_horizontal(theta: &FactorPoint, xi: &Tangent) -> bool {
    horizontality_residual(theta, xi) <= SYM_TOL * xi.y.norm()
}

/// The metric `tr(ξ_Yᵀ ζ_Y) + Σ ξ_D ζ_D / D²`.
pub fn metric_inner(theta: &FactorPoint, xi: &Tangent, zeta: &Tangent) -> Result<f64> {
    theta.check_tangent(xi)?;
    theta.check_tangent(zeta)?;
    Ok(metric_inner_unchecked(theta, xi, zeta))
}

pub(crate) fn metric_inner_unchecked(theta: &FactorPoint, xi: &Tangent, zeta: &Tangent) -> f64 {
    let diag: f64 = xi
        .d
        .iter()
        .zip(zeta.d.iter())
        .zip(theta.d.iter())
        .map(|((a, b), d)| a * b / (d * d))
        .sum();
    xi.y.dot(&zeta.y) + diag
}

/// Metric norm `√⟨ξ, ξ⟩_θ`.
pub fn metric_norm(theta: &FactorPoint, xi: &Tangent) -> Result<f64> {
    Ok(metric_inner(theta, xi, xi)?.sqrt())
}

/// Solve `ΩQ + QΩ = R` for skew `Ω`, given symmetric positive definite `Q`
/// and skew `R`.
///
/// In the eigenbasis `Q = VΛVᵀ` the equation decouples entrywise:
/// `Ω̃_ij = R̃_ij / (λ_i + λ_j)`.
pub fn solve_sylvester(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    check_shape("sylvester Q", (n, n), q.shape())?;
    check_shape("sylvester R", (n, n), r.shape())?;
    let (lambda, v) = linalg::sym_eigen(q);
    let (lmin, lmax) = (lambda[0], lambda[n - 1]);
    let floor = RANK_TOL * RANK_TOL * lmax;
    if !(lmax > 0.0 && lmin > floor) {
        return Err(Error::RankDeficient {
            sigma_min: lmin.max(0.0).sqrt(),
            tolerance: RANK_TOL * lmax.max(0.0).sqrt(),
        });
    }
    let mut rt = v.transpose() * r * &v;
    for j in 0..n {
        for i in 0..n {
            rt[(i, j)] /= lambda[i] + lambda[j];
        }
    }
    let omega = &v * rt * v.transpose();
    Ok(linalg::skew_part(&omega))
}

/// Metric projection of an ambient vector onto the horizontal space at `theta`:
/// `(Z_Y − YΩ, Z_D)` with `Ω` solving `Ω YᵀY + YᵀY Ω = YᵀZ_Y − Z_YᵀY`.
pub fn project_horizontal(theta: &FactorPoint, z: &Tangent) -> Result<Horizontal> {
    theta.check_tangent(z)?;
    let yt_z = theta.y.transpose() * &z.y;
    let rhs = &yt_z - yt_z.transpose();
    let gram = theta.y.transpose() * &theta.y;
    let omega = solve_sylvester(&gram, &rhs)?;
    Ok(Horizontal(Tangent::new(
        &z.y - &theta.y * omega,
        z.d.clone(),
    )))
}

/// Action of a symmetric Euclidean gradient `G = ∇_Θ f` on a factor point:
/// the product `G·Y` and the diagonal `diag(G)`.
///
/// This is everything the Riemannian gradient needs, so callers with
/// structure (sums of rank-one terms, Woodbury inverses) never form `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct EgradAction {
    pub gy: DMatrix<f64>,
    pub diag: DVector<f64>,
}

impl EgradAction {
    pub fn zeros(p: usize, r: usize) -> Self {
        Self {
            gy: DMatrix::zeros(p, r),
            diag: DVector::zeros(p),
        }
    }

    /// Action of a dense symmetric gradient.
    pub fn from_dense(theta: &FactorPoint, g: &DMatrix<f64>) -> Result<Self> {
        let p = theta.dim();
        check_shape("euclidean gradient", (p, p), g.shape())?;
        Ok(Self {
            gy: g * &theta.y,
            diag: g.diagonal(),
        })
    }

    pub fn add_scaled(&mut self, a: f64, other: &EgradAction) {
        self.gy += &other.gy * a;
        self.diag.axpy(a, &other.diag, 1.0);
    }
}

/// Riemannian gradient from a dense symmetric Euclidean gradient:
/// `(2·G·Y, D·ddiag(G)·D)`. Horizontal without further projection.
pub fn egrad_to_rgrad(theta: &FactorPoint, g: &DMatrix<f64>) -> Result<Horizontal> {
    let action = EgradAction::from_dense(theta, g)?;
    action_to_rgrad(theta, &action)
}

/// Riemannian gradient from a structured gradient action.
pub fn action_to_rgrad(theta: &FactorPoint, a: &EgradAction) -> Result<Horizontal> {
    check_shape("gradient action", theta.y.shape(), a.gy.shape())?;
    check_shape("gradient diagonal", theta.d.shape(), a.diag.shape())?;
    let xi_d = a.diag.component_mul(&theta.d).component_mul(&theta.d);
    Ok(Horizontal(Tangent::new(&a.gy * 2.0, xi_d)))
}

/// Second-order retraction `(Y + ξ_Y, D + ξ_D + ξ_D²/(2D))`.
///
/// The diagonal update equals `D·((e+1)² + 1)/2` with `e = ξ_D/D`, which is
/// at least `D/2` for every `ξ_D`. A rank-deficient `Y + ξ_Y` is an error.
pub fn retract(theta: &FactorPoint, xi: &Tangent) -> Result<FactorPoint> {
    theta.check_tangent(xi)?;
    let d = theta.d.zip_map(&xi.d, |d, x| {
        let e = x / d;
        d * 0.5 * ((e + 1.0) * (e + 1.0) + 1.0)
    });
    let y = &theta.y + &xi.y;
    if let Some(bad) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "retraction overflowed the diagonal ({bad})"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("retraction overflowed the factor".into()));
    }
    check_full_rank(&y)?;
    Ok(FactorPoint { y, d })
}

/// Vector transport by horizontal projection at the target point.
pub fn transport(from: &FactorPoint, to: &FactorPoint, xi: &Horizontal) -> Result<Horizontal> {
    check_shape("transport endpoints", from.y.shape(), to.y.shape())?;
    from.check_tangent(&xi.0)?;
    project_horizontal(to, &xi.0)
}
