//! Reconstruction and topology-recovery metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::complex::PolygonSelector;
use crate::error::{Error, Result};

/// Per-signal relative errors behind an NMSE value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseBreakdown {
    pub nmse: f64,
    /// `|y - y_hat|^2 / |y|^2` per column; `None` for excluded zero columns.
    pub per_signal: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

/// Mean over columns of `|y - y_hat|^2 / |y|^2`, skipping zero-norm columns.
pub fn nmse_detailed(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<NmseBreakdown> {
    if y.shape() != y_hat.shape() {
        return Err(Error::Dimension(format!("shapes {:?} and {:?} differ", y.shape(), y_hat.shape())));
    }
    let mut per_signal = Vec::with_capacity(y.ncols());
    let mut excluded = Vec::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..y.ncols() {
        let den = y.column(t).norm_squared();
        if den == 0.0 {
            excluded.push(t);
            per_signal.push(None);
            continue;
        }
        let e = (y.column(t) - y_hat.column(t)).norm_squared() / den;
        total += e;
        count += 1;
        per_signal.push(Some(e));
    }
    if count == 0 {
        return Err(Error::Dimension("no nonzero signals to score".into()));
    }
    Ok(NmseBreakdown {
        nmse: total / count as f64,
        per_signal,
        excluded,
    })
}

pub fn nmse(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    Ok(nmse_detailed(y, y_hat)?.nmse)
}

/// Fraction of candidate polygons whose activity differs.
pub fn topology_error_rate(p_true: &PolygonSelector, p_hat: &PolygonSelector) -> Result<f64> {
    if p_true.len() != p_hat.len() {
        return Err(Error::Dimension(format!("selector lengths {} and {}", p_true.len(), p_hat.len())));
    }
    if !p_true.is_binary() || !p_hat.is_binary() {
        return Err(Error::Parameter("error rate needs binary selectors".into()));
    }
    if p_true.is_empty() {
        return Ok(0.0);
    }
    let wrong = p_true.values().iter().zip(p_hat.values()).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / p_true.len() as f64)
}

/// `|L - L_hat|_F / |L|_F`.
pub fn laplacian_nmse(l_true: &DMatrix<f64>, l_hat: &DMatrix<f64>) -> Result<f64> {
    if l_true.shape() != l_hat.shape() {
        return Err(Error::Dimension(format!("shapes {:?} and {:?} differ", l_true.shape(), l_hat.shape())));
    }
    let den = l_true.norm();
    if den == 0.0 {
        return Err(Error::Parameter("true Laplacian is zero; relative error undefined".into()));
    }
    Ok((l_true - l_hat).norm() / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmse: f64,
    pub error_rate: Option<f64>,
    pub laplacian_nmse: Option<f64>,
    pub per_signal: Vec<Option<f64>>,
}
