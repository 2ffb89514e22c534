//! Symmetric positive definite matrices: materialisation of factor points,
//! Woodbury inverses, matrix square roots and logarithms, and the
//! affine-invariant geodesic distance with its gradients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::linalg;
use crate::manifold::{EgradAction, FactorPoint};

/// Relative symmetry tolerance for [`SpdMatrix::new`].
pub const SPD_SYM_TOL: f64 = 1e-12;
/// Eigenvalues at or below `LOG_FLOOR·λ_max` make the logarithm undefined.
pub const LOG_FLOOR: f64 = 1e-12;

/// Dense symmetric matrix, expected positive definite.
///
/// Symmetry is checked on construction; definiteness is checked by the
/// operations that need it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        check_shape("spd matrix", (n, n), m.shape())?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entries".into()));
        }
        let asym = linalg::asymmetry(&m);
        if asym > SPD_SYM_TOL * m.norm() {
            return Err(Error::InvalidParameter(format!(
                "matrix is not symmetric: ‖M − Mᵀ‖ = {asym:e}"
            )));
        }
        Ok(Self(m))
    }

    /// Symmetrise `m` and wrap it.
    pub fn symmetrized(mut m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        check_shape("spd matrix", (n, n), m.shape())?;
        linalg::symmetrize(&mut m);
        Self::new(m)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::sym_eigenvalues(&self.0)[0]
    }

    pub fn cholesky(&self) -> Result<Cholesky<f64, Dyn>> {
        self.0
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))
    }
}

/// Which algorithm to use for matrix functions of factor points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpdPath {
    /// Dense symmetric eigendecomposition; always available.
    #[default]
    Dense,
    /// Rank-corrected decomposition where it is exact, dense otherwise.
    LowRank,
}

/// `Θ = YYᵀ + diag(D)`.
pub fn materialize(theta: &FactorPoint) -> SpdMatrix {
    let y = theta.y();
    let mut m = y * y.transpose();
    for (i, d) in theta.d().iter().enumerate() {
        m[(i, i)] += d;
    }
    linalg::symmetrize(&mut m);
    SpdMatrix(m)
}

/// `xᵀΘx = ‖Yᵀx‖² + Σ D_i x_i²` in `O(pr)`.
pub fn quadratic_form(theta: &FactorPoint, x: &DVector<f64>) -> f64 {
    let proj = theta.y().tr_mul(x);
    let diag: f64 = x.iter().zip(theta.d().iter()).map(|(v, d)| d * v * v).sum();
    proj.norm_squared() + diag
}

/// Largest eigenvalue of the Woodbury core `K = I + YᵀD⁻¹Y` (which bounds
/// its condition number, as `λ_min(K) ≥ 1`) beyond which [`Woodbury`] works
/// with a dense Cholesky of `Θ` instead. Forming `K` squares away the
/// information in tiny diagonal entries: `log det Θ` then loses about
/// `ε_mach·λ_max(K)` in absolute terms even when `Θ` itself is
/// well-conditioned, which is enough to stall line searches.
pub const WOODBURY_CORE_COND_MAX: f64 = 1e6;

/// Factored `Θ = YYᵀ + D` for inverse actions and log-determinants.
///
/// Normally caches the Woodbury identity
/// `Θ⁻¹ = D⁻¹ − D⁻¹Y(I + YᵀD⁻¹Y)⁻¹YᵀD⁻¹`; falls back to a dense Cholesky of
/// `Θ` when the core is too ill-conditioned (see [`WOODBURY_CORE_COND_MAX`]).
#[derive(Debug, Clone)]
pub struct Woodbury {
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    LowRank {
        d_inv: DVector<f64>,
        /// `W = D⁻¹Y`.
        w: DMatrix<f64>,
        /// Cholesky of the core `K = I + YᵀD⁻¹Y`.
        core: Cholesky<f64, Dyn>,
        logdet_d: f64,
    },
    Dense {
        chol: Cholesky<f64, Dyn>,
        y: DMatrix<f64>,
    },
}

fn cholesky_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
}

impl Woodbury {
    pub fn new(theta: &FactorPoint) -> Result<Self> {
        let d_inv = theta.d().map(|d| 1.0 / d);
        let w = linalg::scale_rows(theta.y(), &d_inv);
        let r = theta.rank();
        let k = DMatrix::identity(r, r) + theta.y().tr_mul(&w);
        let well_posed = k.iter().all(|v| v.is_finite())
            && linalg::sym_eigenvalues(&k).max() <= WOODBURY_CORE_COND_MAX;
        if !well_posed {
            return Self::dense(theta);
        }
        let core = k.cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite("Woodbury core I + YᵀD⁻¹Y is singular".into())
        })?;
        let logdet_d = theta.d().iter().map(|d| d.ln()).sum();
        Ok(Self {
            repr: Repr::LowRank {
                d_inv,
                w,
                core,
                logdet_d,
            },
        })
    }

    fn dense(theta: &FactorPoint) -> Result<Self> {
        let chol = materialize(theta).into_inner().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite("YYᵀ + D failed to factor".into())
        })?;
        Ok(Self {
            repr: Repr::Dense {
                chol,
                y: theta.y().clone(),
            },
        })
    }

    /// Whether the dense fallback is in use.
    pub fn is_dense(&self) -> bool {
        matches!(self.repr, Repr::Dense { .. })
    }

    /// `Θ⁻¹V` in `O(pkr + pr² + r³)` (`O(p²k)` on the dense fallback).
    pub fn apply(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.repr {
            Repr::LowRank { d_inv, w, core, .. } => {
                check_shape("woodbury rhs", (d_inv.len(), v.ncols()), v.shape())?;
                let inner = core.solve(&w.tr_mul(v));
                Ok(linalg::scale_rows(v, d_inv) - w * inner)
            }
            Repr::Dense { chol, y } => {
                check_shape("woodbury rhs", (y.nrows(), v.ncols()), v.shape())?;
                Ok(chol.solve(v))
            }
        }
    }

    /// `Θ⁻¹Y = W K⁻¹`, using `Yᵀ W = K − I`.
    pub fn inv_times_factor(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::LowRank { w, core, .. } => core.solve(&w.transpose()).transpose(),
            Repr::Dense { chol, y } => chol.solve(y),
        }
    }

    /// `diag(Θ⁻¹) = D⁻¹ − rowdots(W K⁻¹, W)`.
    pub fn inv_diagonal(&self) -> DVector<f64> {
        match &self.repr {
            Repr::LowRank { d_inv, w, .. } => d_inv - linalg::row_dots(&self.inv_times_factor(), w),
            Repr::Dense { chol, .. } => chol.inverse().diagonal(),
        }
    }

    /// `log det Θ = log det D + log det K` (matrix determinant lemma).
    pub fn logdet(&self) -> f64 {
        match &self.repr {
            Repr::LowRank { core, logdet_d, .. } => logdet_d + cholesky_logdet(core),
            Repr::Dense { chol, .. } => cholesky_logdet(chol),
        }
    }

    /// Structured gradient action of `coef·Θ⁻¹` at the factor point it was built from.
    pub fn inverse_action(&self, coef: f64) -> EgradAction {
        EgradAction {
            gy: self.inv_times_factor() * coef,
            diag: self.inv_diagonal() * coef,
        }
    }

    /// Dense `Θ⁻¹`.
    pub fn dense_inverse(&self) -> DMatrix<f64> {
        let p = self.inv_diagonal().len();
        let mut m = self
            .apply(&DMatrix::identity(p, p))
            .expect("identity has matching shape");
        linalg::symmetrize(&mut m);
        m
    }
}

/// `Θ⁻¹V` through the Woodbury identity.
pub fn woodbury_inverse_apply(theta: &FactorPoint, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Woodbury::new(theta)?.apply(v)
}

/// `log det Θ` via the determinant lemma on the `r×r` core.
pub fn logdet(theta: &FactorPoint) -> Result<f64> {
    Ok(Woodbury::new(theta)?.logdet())
}

fn positive_spectrum(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (values, vectors) = linalg::sym_eigen(m);
    let n = values.len();
    if n > 0 && !(values[0] > 0.0 && values[n - 1].is_finite()) {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue {:e}",
            values[0]
        )));
    }
    Ok((values, vectors))
}

/// `(M^{1/2}, M^{−1/2})` by dense symmetric eigendecomposition.
pub fn sqrt_and_inv_sqrt(m: &SpdMatrix) -> Result<(SpdMatrix, SpdMatrix)> {
    let (values, vectors) = positive_spectrum(&m.0)?;
    let sqrt = linalg::spectral_compose(&vectors, &values.map(f64::sqrt));
    let inv_sqrt = linalg::spectral_compose(&vectors, &values.map(|v| 1.0 / v.sqrt()));
    Ok((SpdMatrix(sqrt), SpdMatrix(inv_sqrt)))
}

/// `Θ^{−1/2}` for a factor point (dense reference path).
pub fn inv_sqrt(theta: &FactorPoint) -> Result<SpdMatrix> {
    inv_sqrt_with(theta, SpdPath::Dense)
}

/// `Θ^{−1/2}` with a selectable algorithm.
///
/// The low-rank path is exact when `D = d·I`: with the thin SVD `Y = UΣVᵀ`,
/// `Θ^{−1/2} = d^{−1/2} I + U diag((d + σ²)^{−1/2} − d^{−1/2}) Uᵀ`, which
/// costs `O(p²r)`. Non-scalar diagonals fall back to the dense path.
pub fn inv_sqrt_with(theta: &FactorPoint, path: SpdPath) -> Result<SpdMatrix> {
    if path == SpdPath::LowRank {
        if let Some(m) = inv_sqrt_scalar_diagonal(theta) {
            return Ok(m);
        }
    }
    Ok(sqrt_and_inv_sqrt(&materialize(theta))?.1)
}

fn scalar_diagonal(d: &DVector<f64>) -> Option<f64> {
    let d0 = d[0];
    d.iter().all(|&v| v == d0).then_some(d0)
}

fn inv_sqrt_scalar_diagonal(theta: &FactorPoint) -> Option<SpdMatrix> {
    let d = scalar_diagonal(theta.d())?;
    let svd = theta.y().clone().svd(true, false);
    let u = svd.u?;
    let base = 1.0 / d.sqrt();
    let weights = svd.singular_values.map(|s| 1.0 / (d + s * s).sqrt() - base);
    let mut m = linalg::spectral_compose(&u, &weights);
    for i in 0..m.nrows() {
        m[(i, i)] += base;
    }
    Some(SpdMatrix(m))
}

/// Matrix logarithm `U diag(log λ) Uᵀ`; errors when `λ_min ≤ LOG_FLOOR·λ_max`.
pub fn matrix_log_spd(m: &SpdMatrix) -> Result<DMatrix<f64>> {
    let (values, vectors) = linalg::sym_eigen(&m.0);
    check_log_floor(&values)?;
    Ok(linalg::spectral_compose(&vectors, &values.map(f64::ln)))
}

/// Matrix exponential of a symmetric matrix.
pub fn matrix_exp_sym(m: &DMatrix<f64>) -> SpdMatrix {
    SpdMatrix(linalg::sym_fn(m, f64::exp))
}

fn check_log_floor(values: &DVector<f64>) -> Result<()> {
    let n = values.len();
    if n == 0 {
        return Ok(());
    }
    let (lmin, lmax) = (values[0], values[n - 1]);
    let floor = LOG_FLOOR * lmax;
    if !(lmax > 0.0 && lmax.is_finite() && lmin > floor) {
        return Err(Error::LogUndefined { lambda: lmin, floor });
    }
    Ok(())
}

/// Generalised eigendecomposition of an SPD pair, shared by the geodesic
/// distance and both of its gradients.
///
/// With `A = LLᵀ` and `L⁻¹BL⁻ᵀ = UΛUᵀ`, the matrix `V = L⁻ᵀU` satisfies
/// `VᵀAV = I` and `VᵀBV = Λ`; `Λ` holds the eigenvalues of
/// `A^{−1/2}BA^{−1/2}`. Then
///
/// ```text
/// d²(A, B) = Σ log² λ_j
/// ∇_A d²   = −2 A^{−1/2} log(A^{−1/2}BA^{−1/2}) A^{−1/2} = −2 V diag(log λ) Vᵀ
/// ∇_B d²   = −2 B^{−1/2} log(B^{−1/2}AB^{−1/2}) B^{−1/2} =  2 V diag(log λ / λ) Vᵀ
/// ```
#[derive(Debug, Clone)]
pub struct GeodesicPair {
    lambda: DVector<f64>,
    v: DMatrix<f64>,
}

impl GeodesicPair {
    pub fn new(a: &SpdMatrix, b: &SpdMatrix) -> Result<Self> {
        let p = a.dim();
        check_shape("geodesic pair", (p, p), b.0.shape())?;
        let chol = a.cholesky()?;
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
        let mut c = &l_inv * &b.0 * l_inv.transpose();
        linalg::symmetrize(&mut c);
        let (lambda, u) = linalg::sym_eigen(&c);
        check_log_floor(&lambda)?;
        let v = l_inv.tr_mul(&u);
        Ok(Self { lambda, v })
    }

    /// Eigenvalues of `A^{−1/2}BA^{−1/2}`, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.lambda
    }

    /// `d²(A, B)`.
    pub fn dist2(&self) -> f64 {
        self.lambda.iter().map(|l| l.ln().powi(2)).sum()
    }

    fn first_weights(&self) -> DVector<f64> {
        self.lambda.map(|l| -2.0 * l.ln())
    }

    fn second_weights(&self) -> DVector<f64> {
        self.lambda.map(|l| 2.0 * l.ln() / l)
    }

    /// Dense `∇_A d²(A, B)`.
    pub fn grad_first(&self) -> DMatrix<f64> {
        linalg::spectral_compose(&self.v, &self.first_weights())
    }

    /// Dense `∇_B d²(A, B)`.
    pub fn grad_second(&self) -> DMatrix<f64> {
        linalg::spectral_compose(&self.v, &self.second_weights())
    }

    /// `(∇_A d²)·Y` and its diagonal, in `O(p²r)` given the decomposition.
    pub fn first_action(&self, y: &DMatrix<f64>) -> EgradAction {
        self.action(&self.first_weights(), y)
    }

    /// `(∇_B d²)·Y` and its diagonal.
    pub fn second_action(&self, y: &DMatrix<f64>) -> EgradAction {
        self.action(&self.second_weights(), y)
    }

    fn action(&self, w: &DVector<f64>, y: &DMatrix<f64>) -> EgradAction {
        let mut vty = self.v.tr_mul(y);
        for (j, mut row) in vty.row_iter_mut().enumerate() {
            row *= w[j];
        }
        let gy = &self.v * vty;
        let mut diag = DVector::zeros(self.v.nrows());
        for (j, col) in self.v.column_iter().enumerate() {
            for i in 0..col.len() {
                diag[i] += w[j] * col[i] * col[i];
            }
        }
        EgradAction { gy, diag }
    }
}

/// Affine-invariant distance `‖log(A^{−1/2}BA^{−1/2})‖_F`.
pub fn geodesic_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64> {
    Ok(GeodesicPair::new(a, b)?.dist2().sqrt())
}

/// `∇_A d²(A, B) = −2 A^{−1/2} log(A^{−1/2}BA^{−1/2}) A^{−1/2}`.
pub fn geodesic_grad_first(a: &SpdMatrix, b: &SpdMatrix) -> Result<DMatrix<f64>> {
    Ok(GeodesicPair::new(a, b)?.grad_first())
}

/// `∇_B d²(A, B) = −2 B^{−1/2} log(B^{−1/2}AB^{−1/2}) B^{−1/2}`, i.e. the
/// first-argument gradient with the arguments swapped.
pub fn geodesic_grad_second(a: &SpdMatrix, b: &SpdMatrix) -> Result<DMatrix<f64>> {
    Ok(GeodesicPair::new(a, b)?.grad_second())
}

/// Squared geodesic distance between two factor points.
///
/// The low-rank path is exact when `D_B = c·D_A`: after whitening by
/// `D_A^{−1/2}` both matrices are scaled identities plus low-rank terms
/// supported on `S = span[Ỹ_A, Ỹ_B]` (dimension ≤ 2r), so `S` is invariant
/// for both; the spectrum is `c` on `S^⊥` plus a `2r×2r` generalised
/// eigenproblem on `S`. Cost `O(pr²)`. Otherwise, or when `2r ≥ p`, the dense
/// path is used.
pub fn geodesic_dist2_factors(a: &FactorPoint, b: &FactorPoint, path: SpdPath) -> Result<f64> {
    check_shape("geodesic factors", a.y().shape(), b.y().shape())?;
    if path == SpdPath::LowRank {
        if let Some(d2) = dist2_proportional(a, b)? {
            return Ok(d2);
        }
    }
    Ok(GeodesicPair::new(&materialize(a), &materialize(b))?.dist2())
}

fn dist2_proportional(a: &FactorPoint, b: &FactorPoint) -> Result<Option<f64>> {
    let (p, r) = (a.dim(), a.rank());
    let k = 2 * r;
    if k >= p {
        return Ok(None);
    }
    let ratios = b.d().component_div(a.d());
    let c = ratios[0];
    if ratios.iter().any(|&x| (x - c).abs() > 1e-14 * c) {
        return Ok(None);
    }
    let whiten = a.d().map(|d| 1.0 / d.sqrt());
    let ya = linalg::scale_rows(a.y(), &whiten);
    let yb = linalg::scale_rows(b.y(), &whiten);
    let mut both = DMatrix::zeros(p, k);
    both.columns_mut(0, r).copy_from(&ya);
    both.columns_mut(r, r).copy_from(&yb);
    let q = both.qr().q();
    let (ca, cb) = (q.tr_mul(&ya), q.tr_mul(&yb));
    let mut am = &ca * ca.transpose();
    let mut bm = &cb * cb.transpose();
    for i in 0..k {
        am[(i, i)] += 1.0;
        bm[(i, i)] += c;
    }
    let core = GeodesicPair::new(&SpdMatrix::symmetrized(am)?, &SpdMatrix::symmetrized(bm)?)?;
    Ok(Some(core.dist2() + (p - k) as f64 * c.ln().powi(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;
    use rand::Rng;

    fn spd(m: DMatrix<f64>) -> SpdMatrix {
        SpdMatrix::symmetrized(m).unwrap()
    }

    fn point(y: &[f64], p: usize, d: &[f64]) -> FactorPoint {
        FactorPoint::new(
            DMatrix::from_column_slice(p, y.len() / p, y),
            DVector::from_column_slice(d),
        )
        .unwrap()
    }

    #[test]
    fn materialize_examples() {
        let m = materialize(&point(&[1.0, 0.0], 2, &[1.0, 1.0]));
        assert_eq!(m.as_matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let id = FactorPoint::new(DMatrix::identity(3, 3), DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(materialize(&id).as_matrix(), &(DMatrix::identity(3, 3) * 2.0));
        let mut rng = seeded(1);
        let theta = random_point(&mut rng, 8, 3);
        let dmin = theta.d().min();
        assert!(materialize(&theta).min_eigenvalue() >= dmin - 1e-10);
    }

    #[test]
    fn woodbury_examples() {
        let mut rng = seeded(2);
        let d = DVector::from_fn(4, |_, _| rng.random_range(0.5..2.0));
        let mut y = DMatrix::zeros(4, 1);
        y[(0, 0)] = 1e-8;
        let theta = FactorPoint::new(y, d.clone()).unwrap();
        let v = gaussian(&mut rng, 4, 3);
        let got = woodbury_inverse_apply(&theta, &v).unwrap();
        let want = linalg::scale_rows(&v, &d.map(|x| 1.0 / x));
        assert!((got - want).amax() < 1e-6);

        let theta = random_point(&mut rng, 9, 3);
        let w = gaussian(&mut rng, 9, 2);
        let v = materialize(&theta).as_matrix() * &w;
        let back = woodbury_inverse_apply(&theta, &v).unwrap();
        assert!((back - &w).amax() < 1e-9 * w.amax().max(1.0));
    }

    #[test]
    fn woodbury_matches_dense_lu() {
        let mut rng = seeded(3);
        let theta = random_point(&mut rng, 50, 10);
        let v = gaussian(&mut rng, 50, 4);
        let dense = materialize(&theta).into_inner().lu().solve(&v).unwrap();
        let got = woodbury_inverse_apply(&theta, &v).unwrap();
        assert!((&got - &dense).norm() <= 1e-8 * dense.norm());

        let wb = Woodbury::new(&theta).unwrap();
        let inv = materialize(&theta).into_inner().try_inverse().unwrap();
        assert!((wb.inv_diagonal() - inv.diagonal()).norm() <= 1e-10 * inv.norm());
        assert!((wb.inv_times_factor() - &inv * theta.y()).norm() <= 1e-10 * inv.norm());
        let logdet_dense = materialize(&theta).cholesky().unwrap().determinant().ln();
        assert!((wb.logdet() - logdet_dense).abs() < 1e-9 * logdet_dense.abs().max(1.0));
    }

    #[test]
    fn woodbury_falls_back_to_dense_for_tiny_diagonal() {
        let mut rng = seeded(5);
        let base = random_point(&mut rng, 20, 3);
        assert!(!Woodbury::new(&base).unwrap().is_dense());
        let mut d = base.d().clone();
        d[4] = 2.5e-13;
        let theta = FactorPoint::new(base.y().clone(), d).unwrap();
        let wb = Woodbury::new(&theta).unwrap();
        assert!(wb.is_dense());
        // Θ itself is well-conditioned, so its spectrum is an accurate oracle.
        let oracle: f64 = linalg::sym_eigenvalues(materialize(&theta).as_matrix()).iter().map(|v| v.ln()).sum();
        assert!((wb.logdet() - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
        let inv = materialize(&theta).into_inner().try_inverse().unwrap();
        assert!((wb.inv_times_factor() - &inv * theta.y()).norm() <= 1e-10 * inv.norm());
        assert!((wb.inv_diagonal() - inv.diagonal()).norm() <= 1e-10 * inv.norm());
    }

    #[test]
    fn woodbury_rejects_bad_shape() {
        let mut rng = seeded(4);
        let theta = random_point(&mut rng, 5, 2);
        assert!(woodbury_inverse_apply(&theta, &DMatrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn quadratic_form_examples() {
        let mut rng = seeded(5);
        let theta = random_point(&mut rng, 6, 2);
        let e1 = DVector::from_fn(6, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let want = theta.y().row(0).norm_squared() + theta.d()[0];
        assert!((quadratic_form(&theta, &e1) - want).abs() < 1e-14);
        assert_eq!(quadratic_form(&theta, &DVector::zeros(6)), 0.0);
        for _ in 0..10 {
            let x = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let dense = (x.transpose() * materialize(&theta).as_matrix() * &x)[0];
            assert!((quadratic_form(&theta, &x) - dense).abs() <= 1e-12 * dense.abs());
        }
    }

    #[test]
    fn inv_sqrt_examples() {
        let mut y = DMatrix::zeros(4, 1);
        y[(0, 0)] = 1e-8;
        let theta = FactorPoint::new(y.clone(), DVector::from_element(4, 4.0)).unwrap();
        let m = inv_sqrt(&theta).unwrap();
        assert!((m.as_matrix() - DMatrix::identity(4, 4) * 0.5).amax() < 1e-6);

        let diag = spd(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0, 0.25])));
        let (_, is) = sqrt_and_inv_sqrt(&diag).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0, 2.0]));
        assert!((is.as_matrix() - want).amax() < 1e-14);
    }

    #[test]
    fn inv_sqrt_reconstructs_identity() {
        let mut rng = seeded(6);
        for &(p, r) in &[(5, 1), (10, 3), (30, 6)] {
            let theta = random_point(&mut rng, p, r);
            let is = inv_sqrt(&theta).unwrap();
            let prod = is.as_matrix() * materialize(&theta).as_matrix() * is.as_matrix();
            let err = (prod - DMatrix::identity(p, p)).norm();
            assert!(err <= 1e-8 * (p as f64).sqrt(), "p={p} err={err:e}");
        }
    }

    #[test]
    fn inv_sqrt_low_rank_matches_dense() {
        let mut rng = seeded(7);
        let y = gaussian(&mut rng, 20, 4);
        let theta = FactorPoint::new(y, DVector::from_element(20, 1.7)).unwrap();
        let fast = inv_sqrt_with(&theta, SpdPath::LowRank).unwrap();
        let dense = inv_sqrt(&theta).unwrap();
        assert!((fast.as_matrix() - dense.as_matrix()).amax() < 1e-7);
        // Non-scalar diagonal silently falls back.
        let theta = random_point(&mut rng, 20, 4);
        let fast = inv_sqrt_with(&theta, SpdPath::LowRank).unwrap();
        assert_eq!(fast, inv_sqrt(&theta).unwrap());
    }

    #[test]
    fn matrix_log_examples() {
        assert_eq!(matrix_log_spd(&spd(DMatrix::identity(3, 3))).unwrap().amax(), 0.0);
        let e = std::f64::consts::E;
        let m = spd(DMatrix::from_diagonal(&DVector::from_vec(vec![e, e * e])));
        let l = matrix_log_spd(&m).unwrap();
        assert!((l - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))).amax() < 1e-14);
        let mut rng = seeded(8);
        for _ in 0..5 {
            let a = spd(random_spd(&mut rng, 6));
            let back = matrix_exp_sym(&matrix_log_spd(&a).unwrap());
            assert!((back.as_matrix() - a.as_matrix()).norm() <= 1e-8 * a.as_matrix().norm());
        }
    }

    #[test]
    fn matrix_log_rejects_near_singular() {
        let m = spd(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13])));
        assert!(matches!(matrix_log_spd(&m), Err(Error::LogUndefined { .. })));
    }

    #[test]
    fn geodesic_examples() {
        let mut rng = seeded(9);
        let a = spd(random_spd(&mut rng, 5));
        assert!(geodesic_distance(&a, &a).unwrap() < 1e-7);
        let e2 = spd(DMatrix::identity(3, 3) * 2f64.exp().powi(1));
        let d = geodesic_distance(&spd(DMatrix::identity(3, 3)), &e2).unwrap();
        assert!((d - 2.0 * 3f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn geodesic_matches_generalized_eigen_oracle() {
        let mut rng = seeded(10);
        for _ in 0..5 {
            let a = random_spd(&mut rng, 8);
            let b = random_spd(&mut rng, 8);
            // Oracle: eigenvalues of the non-symmetric A⁻¹B via its real Schur form.
            let m = a.clone().try_inverse().unwrap() * &b;
            let eig = m.complex_eigenvalues();
            let want: f64 = eig.iter().map(|z| z.re.ln().powi(2)).sum();
            assert!(eig.iter().all(|z| z.im.abs() < 1e-8));
            let got = GeodesicPair::new(&spd(a), &spd(b)).unwrap().dist2();
            assert!((got - want).abs() < 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn geodesic_symmetric_and_affine_invariant() {
        let mut rng = seeded(11);
        for _ in 0..5 {
            let a = spd(random_spd(&mut rng, 6));
            let b = spd(random_spd(&mut rng, 6));
            let dab = geodesic_distance(&a, &b).unwrap();
            let dba = geodesic_distance(&b, &a).unwrap();
            assert!((dab - dba).abs() < 1e-10 * dab.max(1.0));
            let m = gaussian(&mut rng, 6, 6) + DMatrix::identity(6, 6) * 3.0;
            let ma = spd(&m * a.as_matrix() * m.transpose());
            let mb = spd(&m * b.as_matrix() * m.transpose());
            let dm = geodesic_distance(&ma, &mb).unwrap();
            assert!((dab - dm).abs() <= 1e-8 * dab);
        }
    }

    #[test]
    fn geodesic_triangle_inequality() {
        let mut rng = seeded(12);
        for _ in 0..20 {
            let n = rng.random_range(2..=10);
            let a = spd(random_spd(&mut rng, n));
            let b = spd(random_spd(&mut rng, n));
            let c = spd(random_spd(&mut rng, n));
            let ab = geodesic_distance(&a, &b).unwrap();
            let bc = geodesic_distance(&b, &c).unwrap();
            let ac = geodesic_distance(&a, &c).unwrap();
            assert!(ab + bc - ac >= -1e-9);
        }
    }

    #[test]
    fn geodesic_interpolation_stays_pd() {
        let mut rng = seeded(13);
        let a = spd(random_spd(&mut rng, 6));
        let b = spd(random_spd(&mut rng, 6));
        let (sa, isa) = sqrt_and_inv_sqrt(&a).unwrap();
        let mid = spd(isa.as_matrix() * b.as_matrix() * isa.as_matrix());
        let log_mid = matrix_log_spd(&mid).unwrap();
        for k in 1..10 {
            let s = k as f64 / 10.0;
            let g = sa.as_matrix() * matrix_exp_sym(&(&log_mid * s)).as_matrix() * sa.as_matrix();
            assert!(spd(g).min_eigenvalue() > 0.0);
        }
    }

    /// Central finite difference of `d²` along symmetric `E` in one argument.
    fn fd_dist2(a: &DMatrix<f64>, b: &DMatrix<f64>, e: &DMatrix<f64>, first: bool, h: f64) -> f64 {
        let f = |s: f64| {
            let (x, y) = if first {
                (a + e * s, b.clone())
            } else {
                (a.clone(), b + e * s)
            };
            GeodesicPair::new(&spd(x), &spd(y)).unwrap().dist2()
        };
        (f(h) - f(-h)) / (2.0 * h)
    }

    #[test]
    fn geodesic_gradient_examples() {
        let mut rng = seeded(14);
        let a = spd(random_spd(&mut rng, 4));
        assert!(geodesic_grad_first(&a, &a).unwrap().amax() < 1e-7);
        assert!(geodesic_grad_second(&a, &a).unwrap().amax() < 1e-7);

        let e = std::f64::consts::E;
        let id = spd(DMatrix::identity(2, 2));
        let de = spd(DMatrix::from_diagonal(&DVector::from_vec(vec![e, 1.0])));
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 0.0]));
        // A = I: ∇_A d² = −2 log B.
        assert!((geodesic_grad_first(&id, &de).unwrap() - &want).amax() < 1e-12);
        // B = I: ∇_B d² = −2 log A (the sign follows from d² being symmetric).
        assert!((geodesic_grad_second(&de, &id).unwrap() - &want).amax() < 1e-12);
    }

    #[test]
    fn geodesic_gradients_match_finite_differences() {
        let mut rng = seeded(15);
        for _ in 0..3 {
            let a = random_spd(&mut rng, 5);
            let b = random_spd(&mut rng, 5);
            let pair = GeodesicPair::new(&spd(a.clone()), &spd(b.clone())).unwrap();
            let (g1, g2) = (pair.grad_first(), pair.grad_second());
            let swapped = geodesic_grad_first(&spd(b.clone()), &spd(a.clone())).unwrap();
            assert!((&g2 - swapped).amax() < 1e-10 * g2.amax().max(1.0));
            for _ in 0..10 {
                let e = random_sym(&mut rng, 5);
                for (g, first) in [(&g1, true), (&g2, false)] {
                    let fd = fd_dist2(&a, &b, &e, first, 1e-5);
                    let an = g.dot(&e);
                    let rel = (fd - an).abs() / an.abs().max(1e-8);
                    assert!(rel <= 1e-5, "first={first} fd={fd} an={an}");
                }
            }
        }
    }

    #[test]
    fn geodesic_actions_match_dense() {
        let mut rng = seeded(16);
        let a = spd(random_spd(&mut rng, 7));
        let b = spd(random_spd(&mut rng, 7));
        let y = gaussian(&mut rng, 7, 2);
        let pair = GeodesicPair::new(&a, &b).unwrap();
        for (dense, act) in [
            (pair.grad_first(), pair.first_action(&y)),
            (pair.grad_second(), pair.second_action(&y)),
        ] {
            assert!((&dense * &y - act.gy).amax() < 1e-10 * dense.amax());
            assert!((dense.diagonal() - act.diag).amax() < 1e-10 * dense.amax());
        }
    }

    #[test]
    fn geodesic_low_rank_matches_dense() {
        let mut rng = seeded(17);
        for &(p, r) in &[(12, 2), (30, 5), (50, 10)] {
            let a = random_point(&mut rng, p, r);
            let c = rng.random_range(0.5..2.0);
            let b = FactorPoint::new(gaussian(&mut rng, p, r), a.d() * c).unwrap();
            let dense = geodesic_dist2_factors(&a, &b, SpdPath::Dense).unwrap();
            let fast = geodesic_dist2_factors(&a, &b, SpdPath::LowRank).unwrap();
            assert!((dense - fast).abs() <= 1e-7 * dense, "p={p} {dense} vs {fast}");
        }
        // Non-proportional diagonals and 2r ≥ p take the dense route.
        let a = random_point(&mut rng, 6, 3);
        let b = random_point(&mut rng, 6, 3);
        assert_eq!(
            geodesic_dist2_factors(&a, &b, SpdPath::LowRank).unwrap(),
            geodesic_dist2_factors(&a, &b, SpdPath::Dense).unwrap()
        );
    }

    #[test]
    fn spd_matrix_validation() {
        assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(SpdMatrix::new(DMatrix::zeros(2, 3)).is_err());
        let not_pd = spd(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(geodesic_distance(&not_pd, &spd(DMatrix::identity(2, 2))).is_err());
    }
}
