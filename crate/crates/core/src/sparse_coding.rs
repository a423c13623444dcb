//! K0-sparse coding by Orthogonal Matching Pursuit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dictionary::{normalize_columns, Dictionary};
use crate::error::{Error, Result};

/// Default stopping tolerance on the residual, relative to `|y|`.
pub const DEFAULT_RES_TOL: f64 = 1e-12;

// An atom whose component orthogonal to the current support is this small
// (relative to its norm) is treated as already spanned.
const DEPENDENCE_TOL: f64 = 1e-10;

/// Output of a single OMP run.
#[derive(Debug, Clone)]
pub struct OmpResult {
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Least-squares coefficients matching `support`.
    pub coefs: Vec<f64>,
    /// Residual norm before the first selection and after each one.
    pub residual_norms: Vec<f64>,
}

impl OmpResult {
    pub fn to_dense(&self, num_atoms: usize) -> DVector<f64> {
        let mut s = DVector::zeros(num_atoms);
        for (&k, &c) in self.support.iter().zip(&self.coefs) {
            s[k] = c;
        }
        s
    }
}

/// Orthogonal Matching Pursuit over a dictionary with unit-norm (or zero)
/// columns.
///
/// Each round picks the atom with the largest `|<r, d_k>|` (lowest index on
/// ties), re-fits all selected coefficients by least squares and updates the
/// residual. Stops after `k0` atoms, once `|r| <= res_tol`, or when no
/// remaining atom correlates with the residual.
pub fn omp(dw: &DMatrix<f64>, y: &DVector<f64>, k0: usize, res_tol: f64) -> Result<OmpResult> {
    if k0 == 0 {
        return Err(Error::Parameter("K0 must be >= 1".into()));
    }
    if dw.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows, signal has length {}",
            dw.nrows(),
            y.len()
        )));
    }
    let atoms = dw.ncols();
    let mut residual = y.clone();
    let mut norms = vec![residual.norm()];
    let mut support: Vec<usize> = Vec::with_capacity(k0);
    let mut blocked = vec![false; atoms];
    // Gram-Schmidt basis of the selected atoms and the triangular factor
    // (column t of `r_factor` holds the coordinates of atom t in `basis`).
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k0);
    let mut r_factor: Vec<Vec<f64>> = Vec::with_capacity(k0);
    let floor = f64::EPSILON * y.norm();

    while support.len() < k0 && *norms.last().unwrap() > res_tol {
        let corr = dw.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (k, &c) in corr.iter().enumerate() {
            if blocked[k] {
                continue;
            }
            let a = c.abs();
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((k, a));
            }
        }
        let Some((k, score)) = best else { break };
        if score <= floor {
            break;
        }

        let atom = dw.column(k).into_owned();
        let atom_norm = atom.norm();
        let mut v = atom.clone();
        let mut coords = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (t, q) in basis.iter().enumerate() {
                let c = q.dot(&v);
                coords[t] += c;
                v.axpy(-c, q, 1.0);
            }
        }
        let nu = v.norm();
        blocked[k] = true;
        if nu <= DEPENDENCE_TOL * atom_norm {
            continue;
        }
        let q = v / nu;
        coords.push(nu);
        residual.axpy(-q.dot(&residual), &q, 1.0);
        basis.push(q);
        r_factor.push(coords);
        support.push(k);
        norms.push(residual.norm());
    }

    // back-substitution R c = Q^T y
    let m = support.len();
    let z: Vec<f64> = basis.iter().map(|q| q.dot(y)).collect();
    let mut coefs = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = z[i];
        for j in (i + 1)..m {
            acc -= r_factor[j][i] * coefs[j];
        }
        coefs[i] = acc / r_factor[i][i];
    }

    Ok(OmpResult {
        support,
        coefs,
        residual_norms: norms,
    })
}

/// Sparse codes for a batch of signals, one column per signal.
#[derive(Debug, Clone)]
pub struct SparseCode {
    pub s: DMatrix<f64>,
}

impl SparseCode {
    pub fn zeros(atoms: usize, signals: usize) -> Self {
        Self {
            s: DMatrix::zeros(atoms, signals),
        }
    }

    /// Largest number of nonzeros in any column.
    pub fn max_support(&self) -> usize {
        self.s
            .column_iter()
            .map(|c| c.iter().filter(|&&v| v != 0.0).count())
            .max()
            .unwrap_or(0)
    }
}

/// Codes every column of `y` against an arbitrary dictionary matrix using
/// column normalization: OMP runs on `D W` and the result is mapped back as
/// `S = W S_w`, so `D S = (D W) S_w`.
pub fn sparse_code_matrix(d: &DMatrix<f64>, y: &DMatrix<f64>, k0: usize, res_tol: f64) -> Result<SparseCode> {
    if d.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "dictionary has {} rows, signals have {}",
            d.nrows(),
            y.nrows()
        )));
    }
    if k0 == 0 {
        return Err(Error::Parameter("K0 must be >= 1".into()));
    }
    let (dw, w) = normalize_columns(d);
    let columns: Vec<DVector<f64>> = y.column_iter().map(|c| c.into_owned()).collect();
    let coded: Vec<OmpResult> = columns
        .par_iter()
        .map(|col| omp(&dw, col, k0, res_tol * col.norm()))
        .collect::<Result<_>>()?;
    let mut s = DMatrix::zeros(d.ncols(), y.ncols());
    for (t, res) in coded.iter().enumerate() {
        for (&k, &c) in res.support.iter().zip(&res.coefs) {
            s[(k, t)] = w[k] * c;
        }
    }
    Ok(SparseCode { s })
}

/// [`sparse_code_matrix`] for an assembled dictionary. `res_tol` is relative
/// to each signal's norm.
pub fn sparse_code(dict: &Dictionary, y: &DMatrix<f64>, k0: usize, res_tol: f64) -> Result<SparseCode> {
    sparse_code_matrix(dict.matrix(), y, k0, res_tol)
}
