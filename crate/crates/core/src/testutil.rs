//! Random instances for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::manifold::{project_horizontal, FactorPoint, Horizontal, Tangent};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_point(rng: &mut impl Rng, p: usize, r: usize) -> FactorPoint {
    let y = gaussian(rng, p, r);
    let d = DVector::from_fn(p, |_, _| rng.random_range(0.5..2.0));
    FactorPoint::new(y, d).unwrap()
}

pub fn random_tangent(rng: &mut impl Rng, p: usize, r: usize) -> Tangent {
    Tangent::new(
        gaussian(rng, p, r),
        DVector::from_fn(p, |_, _| rng.sample(StandardNormal)),
    )
}

pub fn random_horizontal(rng: &mut impl Rng, theta: &FactorPoint) -> Horizontal {
    let z = random_tangent(rng, theta.dim(), theta.rank());
    project_horizontal(theta, &z).unwrap()
}

pub fn random_sym(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    (&a + a.transpose()) * 0.5
}

pub fn random_skew(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    &a - a.transpose()
}

pub fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5
}

pub fn random_orthonormal(rng: &mut impl Rng, p: usize, r: usize) -> DMatrix<f64> {
    gaussian(rng, p, r).qr().q()
}

pub fn random_orthogonal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    random_orthonormal(rng, n, n)
}
