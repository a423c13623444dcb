//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Orthonormal basis of the column space of `a`, keeping directions whose
/// singular value exceeds `max(tol, 1e-6) * max(1, sigma_max)`.
///
/// Computed from the eigenvectors of `A A^T`. nalgebra's SVD can return an
/// inaccurate factorization for some rank-deficient incidence matrices, and
/// the symmetric eigensolver does not. Working with squared singular values
/// limits resolution to about `1e-7 sigma_max`, hence the floor on `tol`.
pub fn column_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let eig = SymmetricEigen::new(a * a.transpose());
    let smax = eig.eigenvalues.max().max(0.0).sqrt();
    let cutoff = tol.max(1e-6) * smax.max(1.0);
    let keep: Vec<usize> = (0..rows)
        .filter(|&i| eig.eigenvalues[i].max(0.0).sqrt() > cutoff)
        .collect();
    let mut basis = DMatrix::zeros(rows, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(i));
    }
    basis
}

/// Numerical rank, with the cutoff of [`column_space`].
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    column_space(a, tol).ncols()
}

/// Orthogonal projection of `y` onto the span of the orthonormal columns of `basis`.
pub fn project(basis: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return DVector::zeros(y.len());
    }
    basis * (basis.transpose() * y)
}

/// `[I, A, A^2, ..., A^k]` by repeated multiplication.
pub fn powers(a: &DMatrix<f64>, k: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(k + 1);
    out.push(DMatrix::identity(n, n));
    for j in 1..=k {
        let next = &out[j - 1] * a;
        out.push(next);
    }
    out
}

/// Largest absolute entry of `a - a^T`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Frobenius inner product `<a, b>_F`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
