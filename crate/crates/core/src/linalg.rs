//! Small dense helpers shared by the geometry and model code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

/// `V diag(w) Vᵀ` for a column-orthonormal (or any) `V`.
pub fn spectral_compose(vectors: &DMatrix<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    let mut out = scaled * vectors.transpose();
    symmetrize(&mut out);
    out
}

/// Apply a scalar function to the spectrum of a symmetric matrix.
pub fn sym_fn(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    spectral_compose(&vectors, &values.map(f))
}

/// Replace `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// `‖m − mᵀ‖_F`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm()
}

/// `(m − mᵀ)/2`.
pub fn skew_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m - m.transpose()) * 0.5
}

/// Singular values of a (typically tall) matrix, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Row-wise dot products: `out_i = Σ_k a_ik b_ik`.
pub fn row_dots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    debug_assert_eq!(a.shape(), b.shape());
    let mut out = DVector::zeros(a.nrows());
    for k in 0..a.ncols() {
        let (ca, cb) = (a.column(k), b.column(k));
        for i in 0..a.nrows() {
            out[i] += ca[i] * cb[i];
        }
    }
    out
}

/// Scale row `i` of `m` by `s_i`.
pub fn scale_rows(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        col.component_mul_assign(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (w, v) = sym_eigen(&m);
        assert!(w[0] <= w[1] && w[1] <= w[2]);
        let back = spectral_compose(&v, &w);
        assert!((back - &m).norm() < 1e-12);
        assert!((sym_eigenvalues(&m) - w).norm() < 1e-12);
    }

    #[test]
    fn row_helpers() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(row_dots(&a, &a).as_slice(), &[5.0, 25.0]);
        let s = scale_rows(&a, &DVector::from_vec(vec![2.0, -1.0]));
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[2.0, 4.0, -3.0, -4.0]));
    }
}
