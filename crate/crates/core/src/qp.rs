//! The dictionary-coefficient sub-problem as a strongly convex QP.
//!
//! With sparse codes `S_bar` and topology fixed, the data term is quadratic in
//! `h`:
//!
//! ```text
//!     |Y - H(h) S_bar|_F^2 + gamma |h|^2 = h^T Q h - r^T h + |Y|_F^2
//! ```
//!
//! where `H(h) = [H_1 ... H_M]` is the unscaled filter bank. Callers holding
//! codes for the scaled dictionary `D = sqrt(N) H` pass `S_bar = sqrt(N) S`,
//! which keeps `D S = H S_bar` exact. The spectral constraints bound each
//! kernel to `[0, d]` and their sum to `[d - eps, d + eps]` at every
//! eigenvalue of the Hodge Laplacian.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dictionary::LaplacianPowers;
use crate::error::{Error, Result};
use crate::linalg;

/// Default ridge weight on `h`.
pub const DEFAULT_GAMMA: f64 = 1e-7;
pub const DEFAULT_KKT_TOL: f64 = 1e-6;

/// The `(2J+1) M` matrices `P_a` with `[H(h) S_bar]_{e,t} = sum_a h_a [P_a]_{e,t}`.
///
/// For block `i` they are `S_bar_i`, `L_up^j S_bar_i` (j = 1..J) and
/// `L_down^j S_bar_i` (j = 1..J), matching the coefficient layout
/// `[h_id; h_u; h_d]`. The vector `v` of an entry `(e, t)` is the column of
/// their `(e, t)` entries.
#[derive(Debug, Clone)]
pub struct FeatureMatrices {
    order: usize,
    blocks: usize,
    mats: Vec<DMatrix<f64>>,
}

impl FeatureMatrices {
    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// `v` for edge `e` and signal `t`.
    pub fn v(&self, e: usize, t: usize) -> DVector<f64> {
        DVector::from_iterator(self.mats.len(), self.mats.iter().map(|m| m[(e, t)]))
    }

    /// `H(h) S_bar = sum_a h_a P_a`.
    pub fn model(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let (n, t) = self.mats[0].shape();
        let mut out = DMatrix::zeros(n, t);
        for (m, &c) in self.mats.iter().zip(h.iter()) {
            if c != 0.0 {
                out += m * c;
            }
        }
        out
    }
}

/// Builds the per-entry regressors for codes `s_bar` (`M N x T`, unscaled
/// convention).
pub fn build_v_vectors(s_bar: &DMatrix<f64>, powers: &LaplacianPowers, blocks: usize) -> Result<FeatureMatrices> {
    let n = powers.dim();
    let order = powers.order();
    if s_bar.nrows() != n * blocks {
        return Err(Error::Dimension(format!(
            "codes have {} rows, expected M N = {}",
            s_bar.nrows(),
            n * blocks
        )));
    }
    let l_up = &powers.up[1];
    let l_down = &powers.down[1];
    let mut mats = Vec::with_capacity((2 * order + 1) * blocks);
    for i in 0..blocks {
        let si = s_bar.rows(i * n, n).into_owned();
        let mut ups = Vec::with_capacity(order);
        let mut downs = Vec::with_capacity(order);
        let mut cur = si.clone();
        for _ in 0..order {
            cur = l_up * &cur;
            ups.push(cur.clone());
        }
        cur = si.clone();
        for _ in 0..order {
            cur = l_down * &cur;
            downs.push(cur.clone());
        }
        mats.push(si);
        mats.extend(ups);
        mats.extend(downs);
    }
    Ok(FeatureMatrices { order, blocks, mats })
}

/// `min h^T Q h - r^T h  s.t.  lo <= A h <= hi`.
///
/// Bounds may be infinite for one-sided rows.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub r: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    /// Ridge weight already folded into `q`.
    pub gamma: f64,
    /// `|Y|_F^2`, so that `objective + constant` is the data-fit value.
    pub constant: f64,
    /// Present when the box/sum rows came from [`SpectralConstraints`].
    pub bounds: Option<(f64, f64)>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// `h^T Q h - r^T h`.
    pub fn objective(&self, h: &DVector<f64>) -> f64 {
        h.dot(&(&self.q * h)) - self.r.dot(h)
    }

    /// Largest violation of `lo <= A h <= hi`.
    pub fn max_violation(&self, h: &DVector<f64>) -> f64 {
        let ah = &self.a * h;
        (0..ah.len())
            .map(|k| (self.lo[k] - ah[k]).max(ah[k] - self.hi[k]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Restricts the problem to `h = E g` with `E` block diagonal over the `M`
    /// blocks.
    pub fn reduce(&self, block_expansion: &DMatrix<f64>) -> QpProblem {
        let e = block_diag(block_expansion, self.dim() / block_expansion.nrows());
        QpProblem {
            q: e.transpose() * &self.q * &e,
            r: e.tr_mul(&self.r),
            a: &self.a * &e,
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            gamma: self.gamma,
            constant: self.constant,
            bounds: self.bounds,
        }
    }
}

pub fn block_diag(block: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * copies, c * copies);
    for i in 0..copies {
        out.view_mut((i * r, i * c), (r, c)).copy_from(block);
    }
    out
}

/// Quadratic form of the data term: `Q = sum v v^T + gamma I`,
/// `r = 2 sum Y_et v`. Constraints are left empty; see
/// [`SpectralConstraints::apply`].
pub fn assemble_qp(y: &DMatrix<f64>, features: &FeatureMatrices, gamma: f64) -> Result<QpProblem> {
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!("gamma must be > 0, got {gamma}")));
    }
    if features.mats[0].shape() != y.shape() {
        return Err(Error::Dimension(format!(
            "signals are {:?}, codes produce {:?}",
            y.shape(),
            features.mats[0].shape()
        )));
    }
    let k = features.len();
    let mut q = DMatrix::zeros(k, k);
    let mut r = DVector::zeros(k);
    for a in 0..k {
        r[a] = 2.0 * linalg::frob_dot(y, &features.mats[a]);
        for b in a..k {
            let v = linalg::frob_dot(&features.mats[a], &features.mats[b]);
            q[(a, b)] = v;
            q[(b, a)] = v;
        }
        q[(a, a)] += gamma;
    }
    Ok(QpProblem {
        q,
        r,
        a: DMatrix::zeros(0, k),
        lo: DVector::zeros(0),
        hi: DVector::zeros(0),
        gamma,
        constant: y.norm_squared(),
        bounds: None,
    })
}

/// Per-frequency kernel constraints `0 <= F h_i <= d` and
/// `d - eps <= sum_i F h_i <= d + eps`.
#[derive(Debug, Clone)]
pub struct SpectralConstraints {
    pub f: DMatrix<f64>,
    pub blocks: usize,
    pub d: f64,
    pub eps: f64,
}

impl SpectralConstraints {
    pub fn new(f: DMatrix<f64>, blocks: usize, d: f64, eps: f64) -> Result<Self> {
        if !(d > 0.0) || !(eps >= 0.0) {
            return Err(Error::Parameter(format!("need d > 0 and eps >= 0, got d = {d}, eps = {eps}")));
        }
        Ok(Self { f, blocks, d, eps })
    }

    /// Rows `[I_M (x) F ; 1^T (x) F]` with their bounds.
    pub fn rows(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let (n, w) = self.f.shape();
        let m = self.blocks;
        let mut a = DMatrix::zeros(n * m + n, w * m);
        for i in 0..m {
            a.view_mut((i * n, i * w), (n, w)).copy_from(&self.f);
            a.view_mut((m * n, i * w), (n, w)).copy_from(&self.f);
        }
        let mut lo = DVector::zeros(n * m + n);
        let mut hi = DVector::from_element(n * m + n, self.d);
        for k in m * n..m * n + n {
            lo[k] = self.d - self.eps;
            hi[k] = self.d + self.eps;
        }
        (a, lo, hi)
    }

    pub fn apply(&self, mut problem: QpProblem) -> Result<QpProblem> {
        let (a, lo, hi) = self.rows();
        if a.ncols() != problem.dim() {
            return Err(Error::Dimension(format!(
                "constraints act on {} coefficients, problem has {}",
                a.ncols(),
                problem.dim()
            )));
        }
        problem.a = a;
        problem.lo = lo;
        problem.hi = hi;
        problem.bounds = Some((self.d, self.eps));
        Ok(problem)
    }
}

/// KKT residuals of a returned point, measured on the row-normalized problem.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub primal_infeasibility: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal_infeasibility.max(self.stationarity).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub h: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt: KktReport,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: DEFAULT_KKT_TOL,
            max_iter: 200,
        }
    }
}

/// Solves a [`QpProblem`] with a primal-dual interior-point method
/// (Mehrotra predictor-corrector).
///
/// Rows are scaled to unit infinity norm and exact duplicates are merged
/// before solving. Residuals in the returned [`KktReport`] are relative to the
/// scaled problem; the iteration stops once all of them are below
/// `min(kkt_tol, 1e-9)`.
pub fn solve_qp(problem: &QpProblem, opts: SolverOptions) -> Result<QpSolution> {
    let n = problem.dim();
    let obj_scale = linalg::max_abs(&problem.q).max(problem.r.amax()).max(1e-300);
    // minimize 1/2 x^T G x + c^T x
    let g = &problem.q * (2.0 / obj_scale);
    let c = &problem.r * (-1.0 / obj_scale);
    let (cmat, b) = inequality_rows(problem)?;
    let m = cmat.nrows();
    let target = opts.kkt_tol.min(1e-9);
    let infeasible = |detail: String| {
        let (d, eps) = problem.bounds.unwrap_or((f64::NAN, f64::NAN));
        Error::Infeasible { d, eps, detail }
    };

    if m == 0 {
        let chol = Cholesky::new(g.clone()).ok_or_else(|| Error::Parameter("Q is not positive definite".into()))?;
        let x = chol.solve(&(-&c));
        let kkt = KktReport {
            primal_infeasibility: 0.0,
            stationarity: (&g * &x + &c).amax(),
            complementarity: 0.0,
        };
        return Ok(QpSolution {
            objective: problem.objective(&x),
            h: x,
            iterations: 0,
            kkt,
        });
    }

    let mut x = DVector::zeros(n);
    let mut s = (&cmat * &x - &b).map(|v| v.abs().max(1.0));
    let mut z = DVector::from_element(m, 1.0);
    let c_norm = 1.0 + c.amax();
    let b_norm = 1.0 + b.amax();

    for iter in 0..opts.max_iter {
        let r_d = &g * &x + &c - cmat.tr_mul(&z);
        let r_p = &cmat * &x - &s - &b;
        let mu = s.dot(&z) / m as f64;
        let kkt = KktReport {
            primal_infeasibility: r_p.amax() / b_norm,
            stationarity: r_d.amax() / c_norm,
            complementarity: mu,
        };
        if kkt.max() <= target {
            return Ok(QpSolution {
                objective: problem.objective(&x),
                h: x,
                iterations: iter,
                kkt,
            });
        }
        if z.amax() > 1e14 && kkt.primal_infeasibility > target {
            return Err(infeasible(format!(
                "dual multipliers diverged with primal residual {:.3e}",
                kkt.primal_infeasibility
            )));
        }

        let ratio = DVector::from_iterator(m, (0..m).map(|k| z[k] / s[k]));
        let mut normal = g.clone();
        for k in 0..m {
            let row = cmat.row(k);
            normal.ger(ratio[k], &row.transpose(), &row.transpose(), 1.0);
        }
        let chol = match Cholesky::new(normal) {
            Some(ch) => ch,
            None => {
                return Err(Error::NotConverged {
                    iterations: iter,
                    residual: kkt.max(),
                })
            }
        };
        let solve = |rc: &DVector<f64>| {
            // (G + C^T Z S^-1 C) dx = -r_d + C^T S^-1 (rc - Z r_p)
            let w = DVector::from_iterator(m, (0..m).map(|k| (rc[k] - z[k] * r_p[k]) / s[k]));
            let rhs = -&r_d + cmat.tr_mul(&w);
            let dx = chol.solve(&rhs);
            let ds = &cmat * &dx + &r_p;
            let dz = DVector::from_iterator(m, (0..m).map(|k| (rc[k] - z[k] * ds[k]) / s[k]));
            (dx, ds, dz)
        };

        // predictor
        let rc_aff = DVector::from_iterator(m, (0..m).map(|k| -s[k] * z[k]));
        let (_, ds_a, dz_a) = solve(&rc_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3);

        // corrector
        let rc = DVector::from_iterator(m, (0..m).map(|k| -s[k] * z[k] - ds_a[k] * dz_a[k] + sigma * mu));
        let (dx, ds, dz) = solve(&rc);
        let tau = 0.995;
        let alpha = (tau * max_step(&s, &ds)).min(tau * max_step(&z, &dz)).min(1.0);
        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
    }

    let r_p = &cmat * &x - &s - &b;
    let primal = r_p.amax() / b_norm;
    if primal > 1e-6 {
        return Err(infeasible(format!("primal residual stalled at {primal:.3e}")));
    }
    let r_d = &g * &x + &c - cmat.tr_mul(&z);
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: (r_d.amax() / c_norm).max(s.dot(&z) / m as f64),
    })
}

// Largest alpha in (0, 1] keeping v + alpha dv >= 0.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = 1.0f64;
    for (a, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            alpha = alpha.min(-a / d);
        }
    }
    alpha
}

// Converts `lo <= A h <= hi` into `C h >= b` with unit-norm rows, merging
// duplicates to the tightest bound.
fn inequality_rows(problem: &QpProblem) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = problem.dim();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut push = |row: Vec<f64>, bound: f64| -> Result<()> {
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            if bound > 0.0 {
                let (d, eps) = problem.bounds.unwrap_or((f64::NAN, f64::NAN));
                return Err(Error::Infeasible {
                    d,
                    eps,
                    detail: "constant row violates its bound".into(),
                });
            }
            return Ok(());
        }
        rows.push((row.iter().map(|v| v / scale).collect(), bound / scale));
        Ok(())
    };
    for k in 0..problem.a.nrows() {
        let row: Vec<f64> = problem.a.row(k).iter().copied().collect();
        if problem.lo[k].is_finite() {
            push(row.clone(), problem.lo[k])?;
        }
        if problem.hi[k].is_finite() {
            push(row.iter().map(|v| -v).collect(), -problem.hi[k])?;
        }
    }
    // merge rows that agree to 1e-12
    let key = |r: &[f64]| -> Vec<i64> { r.iter().map(|v| (v * 1e12).round() as i64).collect() };
    let mut merged: std::collections::BTreeMap<Vec<i64>, (Vec<f64>, f64)> = std::collections::BTreeMap::new();
    for (row, bound) in rows {
        merged
            .entry(key(&row))
            .and_modify(|e| e.1 = e.1.max(bound))
            .or_insert((row, bound));
    }
    let m = merged.len();
    let mut c = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for (k, (_, (row, bound))) in merged.into_iter().enumerate() {
        for j in 0..n {
            c[(k, j)] = row[j];
        }
        b[k] = bound;
    }
    Ok((c, b))
}
