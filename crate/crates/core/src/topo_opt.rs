//! Topology-update primitives: objective evaluation, greedy polygon removal,
//! the gradient with respect to the polygon weights, and the boxed hard
//! threshold used by the relaxed update.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::complex::{CellComplex2, PolygonSelector};
use crate::dictionary::{assemble, DictionaryParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sparse_coding::{sparse_code, SparseCode};

/// Objective value with the residual that produced it.
#[derive(Debug, Clone)]
pub struct ObjectiveState {
    pub value: f64,
    pub residual: DMatrix<f64>,
}

/// Training signals bound to a complex, with the lower-Laplacian data cached.
///
/// All methods evaluate `|Y - D(h, p) S|_F^2` (plus `gamma |h|^2` where
/// stated) without forming the dictionary: block coefficients are folded into
/// the codes first and the Laplacian polynomials are applied by Horner's rule.
#[derive(Debug, Clone)]
pub struct TopologyObjective<'a> {
    complex: &'a CellComplex2,
    y: &'a DMatrix<f64>,
    gamma: f64,
    l_down: DMatrix<f64>,
}

// sqrt(N)-scaled coefficient-weighted code sums: identity part, and one
// matrix per power for the upper and lower polynomials.
struct FoldedCodes {
    id: DMatrix<f64>,
    up: Vec<DMatrix<f64>>,
    down: Vec<DMatrix<f64>>,
}

impl<'a> TopologyObjective<'a> {
    pub fn new(complex: &'a CellComplex2, y: &'a DMatrix<f64>, gamma: f64) -> Result<Self> {
        if y.nrows() != complex.num_edges() {
            return Err(Error::Dimension(format!(
                "signals have {} rows, complex has {} edges",
                y.nrows(),
                complex.num_edges()
            )));
        }
        Ok(Self {
            complex,
            y,
            gamma,
            l_down: complex.lower_laplacian(),
        })
    }

    pub fn complex(&self) -> &CellComplex2 {
        self.complex
    }

    pub fn signals(&self) -> &DMatrix<f64> {
        self.y
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn fold(&self, params: &DictionaryParams, code: &SparseCode) -> Result<FoldedCodes> {
        let n = self.complex.num_edges();
        let (rows, t) = code.s.shape();
        if rows != n * params.blocks() || t != self.y.ncols() {
            return Err(Error::Dimension(format!(
                "codes are {rows}x{t}, expected {}x{}",
                n * params.blocks(),
                self.y.ncols()
            )));
        }
        let order = params.order();
        let scale = (n as f64).sqrt();
        let mut id = DMatrix::zeros(n, t);
        let mut up = vec![DMatrix::zeros(n, t); order];
        let mut down = vec![DMatrix::zeros(n, t); order];
        for i in 0..params.blocks() {
            let si = code.s.rows(i * n, n);
            id += si * (scale * params.identity_coef(i));
            for j in 0..order {
                up[j] += si * (scale * params.upper(i)[j]);
                down[j] += si * (scale * params.lower(i)[j]);
            }
        }
        Ok(FoldedCodes { id, up, down })
    }

    // sum_{j=1}^{J} L^j A_j by Horner's rule
    fn poly_apply(l: &DMatrix<f64>, terms: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut acc = terms.last().cloned().unwrap_or_else(|| DMatrix::zeros(l.nrows(), 0));
        for a in terms.iter().rev().skip(1) {
            acc = l * acc + a;
        }
        l * acc
    }

    /// Reconstruction `D(h, p) S`.
    pub fn model(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<DMatrix<f64>> {
        self.model_weights(params, code, p.values())
    }

    /// [`Self::model`] at arbitrary real polygon weights.
    pub fn model_weights(&self, params: &DictionaryParams, code: &SparseCode, w: &[f64]) -> Result<DMatrix<f64>> {
        let folded = self.fold(params, code)?;
        let l_up = self.complex.weighted_upper_laplacian(w)?;
        Ok(self.model_from(&folded, &l_up))
    }

    fn fixed_part(&self, folded: &FoldedCodes) -> DMatrix<f64> {
        &folded.id + Self::poly_apply(&self.l_down, &folded.down)
    }

    fn model_from(&self, folded: &FoldedCodes, l_up: &DMatrix<f64>) -> DMatrix<f64> {
        self.fixed_part(folded) + Self::poly_apply(l_up, &folded.up)
    }

    /// Unregularized data term with its residual.
    pub fn evaluate(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<ObjectiveState> {
        let residual = self.y - self.model(params, code, p)?;
        Ok(ObjectiveState {
            value: residual.norm_squared(),
            residual,
        })
    }

    /// Data term at arbitrary real polygon weights.
    pub fn data_fit_weights(&self, params: &DictionaryParams, code: &SparseCode, w: &[f64]) -> Result<f64> {
        Ok((self.y - self.model_weights(params, code, w)?).norm_squared())
    }

    /// `|Y - D(h, p) S|_F^2`.
    pub fn data_fit(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<f64> {
        Ok(self.evaluate(params, code, p)?.value)
    }

    /// `|Y - D(h, p) S|_F^2 + gamma |h|^2`.
    pub fn objective(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<f64> {
        Ok(self.data_fit(params, code, p)? + self.gamma * params.h().norm_squared())
    }

    /// Scores removing each active polygon (with `h` and `S` fixed) and
    /// returns the best candidate and its data-fit value. Ties go to the
    /// smallest index. Returns `None` when nothing is active.
    pub fn greedy_step(
        &self,
        params: &DictionaryParams,
        code: &SparseCode,
        active: &PolygonSelector,
    ) -> Result<Option<GreedyChoice>> {
        let folded = self.fold(params, code)?;
        let candidates: Vec<usize> = (0..active.len()).filter(|&j| active.values()[j] != 0.0).collect();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|&j| -> Result<f64> {
                let l = self.complex.upper_laplacian(&active.without(j))?;
                Ok((self.y - self.model_from(&folded, &l)).norm_squared())
            })
            .collect::<Result<_>>()?;
        let mut best: Option<GreedyChoice> = None;
        for (&j, &value) in candidates.iter().zip(&scores) {
            if best.as_ref().is_none_or(|b| value < b.value) {
                best = Some(GreedyChoice {
                    polygon: j,
                    value,
                    evaluated: 0,
                });
            }
        }
        if let Some(b) = best.as_mut() {
            b.evaluated = candidates.len();
        }
        Ok(best)
    }

    /// Like [`Self::greedy_step`], but each candidate topology is scored with
    /// codes re-solved by OMP on its own dictionary. Returns the best choice
    /// together with those codes.
    pub fn greedy_step_recoded(
        &self,
        params: &DictionaryParams,
        active: &PolygonSelector,
        k0: usize,
        res_tol: f64,
    ) -> Result<Option<(GreedyChoice, SparseCode)>> {
        let candidates: Vec<usize> = (0..active.len()).filter(|&j| active.values()[j] != 0.0).collect();
        let scored: Vec<(f64, SparseCode)> = candidates
            .par_iter()
            .map(|&j| -> Result<(f64, SparseCode)> {
                let p = active.without(j);
                let dict = assemble(params, &self.complex.hodge_pair(&p)?)?;
                let code = sparse_code(&dict, self.y, k0, res_tol)?;
                Ok(((self.y - dict.matrix() * &code.s).norm_squared(), code))
            })
            .collect::<Result<_>>()?;
        let mut best: Option<usize> = None;
        for (i, (value, _)) in scored.iter().enumerate() {
            if best.is_none_or(|b| *value < scored[b].0) {
                best = Some(i);
            }
        }
        Ok(best.map(|i| {
            let (value, code) = scored.into_iter().nth(i).expect("index in range");
            (
                GreedyChoice {
                    polygon: candidates[i],
                    value,
                    evaluated: candidates.len(),
                },
                code,
            )
        }))
    }

    /// Gradient of the data term with respect to the polygon weights.
    ///
    /// With `R = Y - D S` and `A_j = sqrt(N) sum_i h_u[i][j] S_i`, the upper
    /// part of the model is `sum_j L_up(p)^j A_j` and
    ///
    /// ```text
    ///     df/dp_c = -2 sum_j sum_{a=0}^{j-1} b_c^T L_up^a (R A_j^T) L_up^{j-1-a} b_c
    /// ```
    pub fn grad_p(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<DVector<f64>> {
        self.grad_weights(params, code, p.values())
    }

    /// [`Self::grad_p`] at arbitrary real polygon weights.
    pub fn grad_weights(&self, params: &DictionaryParams, code: &SparseCode, w: &[f64]) -> Result<DVector<f64>> {
        let folded = self.fold(params, code)?;
        let l_up = self.complex.weighted_upper_laplacian(w)?;
        let residual = self.y - self.model_from(&folded, &l_up);
        let order = params.order();
        let pw = linalg::powers(&l_up, order.saturating_sub(1));
        let n = self.complex.num_edges();
        let mut k = DMatrix::zeros(n, n);
        for j in 1..=order {
            let g = &residual * folded.up[j - 1].transpose();
            for a in 0..j {
                k += &pw[a] * &g * &pw[j - 1 - a];
            }
        }
        let grad = (0..self.complex.num_polygons())
            .map(|c| {
                let b = self.complex.polygon_boundary(c);
                -2.0 * b.dot(&(&k * &b))
            })
            .collect::<Vec<_>>();
        Ok(DVector::from_vec(grad))
    }

    /// Curvature estimate of the data term in `p` by power iteration on
    /// finite-difference Hessian-vector products.
    pub fn lipschitz_estimate(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<f64> {
        self.lipschitz_estimate_on(params, code, p, &vec![true; p.len()])
    }

    /// [`Self::lipschitz_estimate`] restricted to the coordinates marked in
    /// `free`; the others are held fixed.
    pub fn lipschitz_estimate_on(
        &self,
        params: &DictionaryParams,
        code: &SparseCode,
        p: &PolygonSelector,
        free: &[bool],
    ) -> Result<f64> {
        if free.len() != p.len() {
            return Err(Error::Dimension(format!("mask has {} entries, p has {}", free.len(), p.len())));
        }
        let k = free.iter().filter(|&&f| f).count();
        if k == 0 {
            return Ok(0.0);
        }
        let mask = DVector::from_iterator(p.len(), free.iter().map(|&f| if f { 1.0 } else { 0.0 }));
        let mut v = &mask / (k as f64).sqrt();
        let mut estimate = 0.0;
        let delta = 1e-4;
        for _ in 0..15 {
            let shifted = |sign: f64| -> Result<DVector<f64>> {
                let values: Vec<f64> = p.values().iter().zip(v.iter()).map(|(a, b)| a + sign * delta * b).collect();
                self.grad_weights(params, code, &values)
            };
            let hv = (shifted(1.0)? - shifted(-1.0)?).component_mul(&mask) / (2.0 * delta);
            let norm = hv.norm();
            if norm == 0.0 {
                return Ok(0.0);
            }
            estimate = norm;
            v = hv / norm;
        }
        Ok(estimate)
    }

    /// One proximal-gradient step on the relaxed weights with backtracking:
    /// the step size is halved until the data term does not increase; after
    /// `max_halvings` failures `p` is returned unchanged.
    pub fn rtdl_step(
        &self,
        params: &DictionaryParams,
        code: &SparseCode,
        p: &PolygonSelector,
        mu: f64,
        lambda: f64,
        max_halvings: usize,
    ) -> Result<RtdlStep> {
        let step = self.rtdl_search(params, code, p, mu, lambda, max_halvings, |cand| {
            Ok((self.data_fit(params, code, cand)?, ()))
        })?;
        Ok(step.0)
    }

    /// [`Self::rtdl_step`] where each trial `p` is scored with the better of
    /// the current codes and codes re-solved by OMP at that `p`. Returns the
    /// re-solved codes when they were the better ones for the accepted trial.
    #[allow(clippy::too_many_arguments)]
    pub fn rtdl_step_recoded(
        &self,
        params: &DictionaryParams,
        code: &SparseCode,
        p: &PolygonSelector,
        mu: f64,
        lambda: f64,
        max_halvings: usize,
        k0: usize,
        res_tol: f64,
    ) -> Result<(RtdlStep, Option<SparseCode>)> {
        let (step, fresh) = self.rtdl_search(params, code, p, mu, lambda, max_halvings, |cand| {
            let kept = self.data_fit(params, code, cand)?;
            let dict = assemble(params, &self.complex.hodge_pair(cand)?)?;
            let fresh = sparse_code(&dict, self.y, k0, res_tol)?;
            let value = (self.y - dict.matrix() * &fresh.s).norm_squared();
            Ok(if value < kept { (value, Some(fresh)) } else { (kept, None) })
        })?;
        Ok((step, fresh.flatten()))
    }

    #[allow(clippy::too_many_arguments)]
    fn rtdl_search<T>(
        &self,
        params: &DictionaryParams,
        code: &SparseCode,
        p: &PolygonSelector,
        mu: f64,
        lambda: f64,
        max_halvings: usize,
        score: impl Fn(&PolygonSelector) -> Result<(f64, T)>,
    ) -> Result<(RtdlStep, Option<T>)> {
        if !(mu > 0.0) {
            return Err(Error::Parameter(format!("step size must be > 0, got {mu}")));
        }
        let before = self.data_fit(params, code, p)?;
        let grad = self.grad_p(params, code, p)?;
        let current = DVector::from_column_slice(p.values());
        let mut step = mu;
        for _ in 0..=max_halvings {
            let z = &current - &grad * step;
            let next = prox_hard_box(&z, lambda)?;
            let cand = PolygonSelector::relaxed(next.iter().copied().collect())?;
            let (after, extra) = score(&cand)?;
            if after <= before {
                let step = RtdlStep {
                    p: cand,
                    mu: step,
                    accepted: true,
                    before,
                    after,
                };
                return Ok((step, Some(extra)));
            }
            step *= 0.5;
        }
        let step = RtdlStep {
            p: p.clone(),
            mu: step,
            accepted: false,
            before,
            after: before,
        };
        Ok((step, None))
    }
}

/// Coordinates a projected-gradient step can move: those not held at the
/// box by a gradient pointing outward.
pub fn free_coordinates(p: &PolygonSelector, grad: &DVector<f64>) -> Vec<bool> {
    p.values()
        .iter()
        .zip(grad.iter())
        .map(|(&v, &g)| !((v >= 1.0 && g <= 0.0) || (v <= 0.0 && g >= 0.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyChoice {
    pub polygon: usize,
    /// Data-fit value with `polygon` removed.
    pub value: f64,
    /// Number of candidates scored.
    pub evaluated: usize,
}

#[derive(Debug, Clone)]
pub struct RtdlStep {
    pub p: PolygonSelector,
    /// Step size actually used.
    pub mu: f64,
    pub accepted: bool,
    pub before: f64,
    pub after: f64,
}

/// Hard threshold at `sqrt(2 lambda)` boxed into `[0, 1]`:
/// `1` if `z >= 1`, `z` if `sqrt(2 lambda) <= z < 1`, `0` otherwise.
pub fn prox_hard_box(z: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda > 0.0 && lambda < 0.5) {
        return Err(Error::Parameter(format!("lambda must lie in (0, 0.5), got {lambda}")));
    }
    let thr = (2.0 * lambda).sqrt();
    Ok(z.map(|v| {
        if v >= 1.0 {
            1.0
        } else if v >= thr {
            v
        } else {
            0.0
        }
    }))
}
