//! Spectrum of the edge Hodge Laplacian and the topological Fourier transform.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::complex::HodgePair;
use crate::error::{Error, Result};
use crate::linalg;

/// Default harmonic threshold, relative to the largest eigenvalue.
pub const DEFAULT_TOL_ZERO: f64 = 1e-8;

/// Relative gap under which neighbouring eigenvalues are treated as one
/// degenerate eigenspace.
const CLUSTER_TOL: f64 = 1e-9;

/// Which Hodge subspace an eigenvector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyClass {
    Harmonic,
    Lower,
    Upper,
}

/// Eigenpairs of `L = L_down + L_up`, ascending, with a per-eigenvector class.
#[derive(Debug, Clone)]
pub struct HodgeSpectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    classes: Vec<FrequencyClass>,
}

impl HodgeSpectrum {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn classes(&self) -> &[FrequencyClass] {
        &self.classes
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn count(&self, class: FrequencyClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Largest eigenvalue among eigenvectors of the given class (0 if none).
    pub fn max_eigenvalue(&self, class: FrequencyClass) -> f64 {
        self.class_values(class).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue among eigenvectors of the given class (0 if none).
    pub fn min_eigenvalue(&self, class: FrequencyClass) -> f64 {
        let m = self.class_values(class).fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            m
        } else {
            0.0
        }
    }

    fn class_values(&self, class: FrequencyClass) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues
            .iter()
            .zip(&self.classes)
            .filter(move |(_, &c)| c == class)
            .map(|(&l, _)| l)
    }

    /// Topological Fourier transform `U^T y`.
    pub fn tft(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y.len())?;
        Ok(self.eigenvectors.tr_mul(y))
    }

    /// Inverse transform `U y_hat`.
    pub fn itft(&self, y_hat: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y_hat.len())?;
        Ok(&self.eigenvectors * y_hat)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::Dimension(format!(
                "signal length {n} does not match spectrum dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition of the Hodge Laplacian with harmonic/lower/upper labels.
///
/// An eigenvalue is harmonic when it is at most `tol_zero * lambda_max`.
/// Inside a repeated eigenvalue the basis is rotated so that each vector lies
/// in either `im(L_down)` or `im(L_up)`; a vector is labelled upper when
/// `|L_up u| > |L_down u|`.
pub fn eigendecompose(hp: &HodgePair, tol_zero: f64) -> Result<HodgeSpectrum> {
    let l = hp.laplacian();
    let n = l.nrows();
    let scale = linalg::max_abs(&l).max(1.0);
    if linalg::asymmetry(&l) > 1e-9 * scale {
        return Err(Error::Eigen("Laplacian is not symmetric".into()));
    }
    if n == 0 {
        return Ok(HodgeSpectrum {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
            classes: Vec::new(),
        });
    }

    let eig = SymmetricEigen::try_new(l, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }

    let lmax = values[n - 1].max(0.0);
    let zero_cut = tol_zero * lmax;
    let gap = CLUSTER_TOL * lmax.max(1.0);

    let mut classes = vec![FrequencyClass::Harmonic; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] <= gap {
            end += 1;
        }
        if values[end - 1] > zero_cut {
            split_cluster(hp, &mut vectors, &mut values, start, end);
            for k in start..end {
                let u = vectors.column(k);
                let up = (&hp.l_up * u).norm();
                let down = (&hp.l_down * u).norm();
                classes[k] = if up > down {
                    FrequencyClass::Upper
                } else {
                    FrequencyClass::Lower
                };
            }
        }
        start = end;
    }
    // harmonic test per eigenvalue, after clustering
    for k in 0..n {
        if values[k] <= zero_cut {
            classes[k] = FrequencyClass::Harmonic;
        }
    }

    Ok(HodgeSpectrum {
        eigenvalues: DVector::from_vec(values),
        eigenvectors: vectors,
        classes,
    })
}

// Rotate the columns start..end (one eigenspace) onto eigenvectors of the
// compressed upper Laplacian, which separates the lower and upper parts.
fn split_cluster(hp: &HodgePair, vectors: &mut DMatrix<f64>, values: &mut [f64], start: usize, end: usize) {
    let k = end - start;
    if k < 2 {
        return;
    }
    let basis = vectors.columns(start, k).into_owned();
    let compressed = basis.transpose() * &hp.l_up * &basis;
    let compressed = (&compressed + compressed.transpose()) * 0.5;
    let eig = SymmetricEigen::new(compressed);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let rotated = &basis * &eig.eigenvectors;
    let l = hp.laplacian();
    for (slot, &i) in idx.iter().enumerate() {
        let u = rotated.column(i).normalize();
        values[start + slot] = (u.transpose() * &l * &u)[(0, 0)];
        vectors.set_column(start + slot, &u);
    }
}

/// Vandermonde-style matrix evaluating a separated kernel at every frequency.
///
/// Row `l` is `[1 | lambda_l, ..., lambda_l^J (upper) | lambda_l, ..., lambda_l^J (lower)]`,
/// where the upper block is zero unless eigenvector `l` is upper-class and the
/// lower block is zero unless it is lower-class.
pub fn constraint_matrix(spec: &HodgeSpectrum, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 {
        return Err(Error::Parameter("polynomial order J must be >= 1".into()));
    }
    let n = spec.dim();
    let mut f = DMatrix::zeros(n, 2 * order + 1);
    for l in 0..n {
        f[(l, 0)] = 1.0;
        let lambda = spec.eigenvalues[l];
        let offset = match spec.classes[l] {
            FrequencyClass::Harmonic => continue,
            FrequencyClass::Upper => 1,
            FrequencyClass::Lower => 1 + order,
        };
        let mut pow = 1.0;
        for j in 0..order {
            pow *= lambda;
            f[(l, offset + j)] = pow;
        }
    }
    Ok(f)
}

/// `[1, lambda_l, ..., lambda_l^J]` per frequency, for joint (unseparated) filters.
pub fn joint_constraint_matrix(spec: &HodgeSpectrum, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 {
        return Err(Error::Parameter("polynomial order J must be >= 1".into()));
    }
    let n = spec.dim();
    let mut f = DMatrix::zeros(n, order + 1);
    for l in 0..n {
        let lambda = if spec.classes[l] == FrequencyClass::Harmonic {
            0.0
        } else {
            spec.eigenvalues[l]
        };
        let mut pow = 1.0;
        for j in 0..=order {
            f[(l, j)] = pow;
            pow *= lambda;
        }
    }
    Ok(f)
}
