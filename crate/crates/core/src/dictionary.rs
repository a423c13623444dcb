//! Parametric topological dictionaries built from cell-complex FIR filters.
//!
//! Each sub-dictionary is `sqrt(N) * H_i` with
//! `H_i = h_id I + sum_j (h_u[j] L_up^j + h_d[j] L_down^j)`. The coefficient
//! vector of one block is laid out as `[h_id, h_u[1..=J], h_d[1..=J]]`; the
//! `sqrt(N)` factor belongs to the assembled matrix and never to `h`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complex::HodgePair;
use crate::error::{Error, Result};
use crate::linalg;
use crate::spectral::{FrequencyClass, HodgeSpectrum};

/// Which coefficients of the separated layout are free.
///
/// Every family is expressed in the separated `[id; up; down]` layout through
/// a fixed linear expansion `h_block = E g_block`:
///
/// * `Separated`: all `2J+1` coefficients free.
/// * `LowerOnly`: upper block pinned to zero (graph-only dictionary).
/// * `Joint`: one polynomial in `L = L_down + L_up`. Because
///   `L_down L_up = B1^T B1 B2 diag(p) B2^T = 0`, `(L_down + L_up)^j` equals
///   `L_down^j + L_up^j` for `j >= 1`, so joint filters are exactly separated
///   filters with tied upper and lower coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Separated,
    LowerOnly,
    Joint,
}

impl Parameterization {
    /// Number of free coefficients per block.
    pub fn free_per_block(self, order: usize) -> usize {
        match self {
            Self::Separated => 2 * order + 1,
            Self::LowerOnly | Self::Joint => order + 1,
        }
    }

    /// `(2J+1) x free` expansion matrix for one block.
    pub fn expansion(self, order: usize) -> DMatrix<f64> {
        let full = 2 * order + 1;
        let free = self.free_per_block(order);
        let mut e = DMatrix::zeros(full, free);
        e[(0, 0)] = 1.0;
        for j in 0..order {
            match self {
                Self::Separated => {
                    e[(1 + j, 1 + j)] = 1.0;
                    e[(1 + order + j, 1 + order + j)] = 1.0;
                }
                Self::LowerOnly => {
                    e[(1 + order + j, 1 + j)] = 1.0;
                }
                Self::Joint => {
                    e[(1 + j, 1 + j)] = 1.0;
                    e[(1 + order + j, 1 + j)] = 1.0;
                }
            }
        }
        e
    }
}

/// Filter coefficients for `M` sub-dictionaries of polynomial order `J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryParams {
    order: usize,
    blocks: usize,
    h: DVector<f64>,
}

impl DictionaryParams {
    pub fn new(order: usize, blocks: usize, h: DVector<f64>) -> Result<Self> {
        if order == 0 || blocks == 0 {
            return Err(Error::Parameter("J and M must both be >= 1".into()));
        }
        if h.len() != (2 * order + 1) * blocks {
            return Err(Error::Dimension(format!(
                "h has length {}, expected (2J+1)M = {}",
                h.len(),
                (2 * order + 1) * blocks
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("h has non-finite entries".into()));
        }
        Ok(Self { order, blocks, h })
    }

    pub fn zeros(order: usize, blocks: usize) -> Self {
        Self {
            order,
            blocks,
            h: DVector::zeros((2 * order + 1) * blocks),
        }
    }

    /// Every block is the all-pass identity kernel `h_id = value`.
    pub fn identity(order: usize, blocks: usize, value: f64) -> Self {
        let mut p = Self::zeros(order, blocks);
        for i in 0..blocks {
            p.block_mut(i)[0] = value;
        }
        p
    }

    pub fn from_blocks(order: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        let flat: Vec<f64> = blocks.iter().flatten().copied().collect();
        if blocks.iter().any(|b| b.len() != 2 * order + 1) {
            return Err(Error::Dimension("block length must be 2J+1".into()));
        }
        Self::new(order, blocks.len(), DVector::from_vec(flat))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_len(&self) -> usize {
        2 * self.order + 1
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let w = self.block_len();
        &self.h.as_slice()[i * w..(i + 1) * w]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.block_len();
        &mut self.h.as_mut_slice()[i * w..(i + 1) * w]
    }

    pub fn identity_coef(&self, i: usize) -> f64 {
        self.block(i)[0]
    }

    pub fn upper(&self, i: usize) -> &[f64] {
        &self.block(i)[1..=self.order]
    }

    pub fn lower(&self, i: usize) -> &[f64] {
        &self.block(i)[self.order + 1..]
    }

    pub fn to_blocks(&self) -> Vec<Vec<f64>> {
        (0..self.blocks).map(|i| self.block(i).to_vec()).collect()
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        Self {
            order: self.order,
            blocks: self.blocks,
            h: &self.h * alpha + &other.h * beta,
        }
    }
}

/// Kernel of one block evaluated at every frequency of `spec`.
pub fn kernel_eval(block: &[f64], spec: &HodgeSpectrum) -> DVector<f64> {
    let order = (block.len() - 1) / 2;
    let (up, down) = (&block[1..=order], &block[order + 1..]);
    DVector::from_iterator(
        spec.dim(),
        spec.eigenvalues().iter().zip(spec.classes()).map(|(&lambda, &class)| {
            let coefs = match class {
                FrequencyClass::Harmonic => return block[0],
                FrequencyClass::Upper => up,
                FrequencyClass::Lower => down,
            };
            let mut pow = 1.0;
            let mut acc = block[0];
            for &c in coefs {
                pow *= lambda;
                acc += c * pow;
            }
            acc
        }),
    )
}

/// Cached powers `L_down^j`, `L_up^j` for `j = 0..=J`.
#[derive(Debug, Clone)]
pub struct LaplacianPowers {
    pub down: Vec<DMatrix<f64>>,
    pub up: Vec<DMatrix<f64>>,
}

impl LaplacianPowers {
    pub fn new(hp: &HodgePair, order: usize) -> Self {
        Self {
            down: linalg::powers(&hp.l_down, order),
            up: linalg::powers(&hp.l_up, order),
        }
    }

    pub fn order(&self) -> usize {
        self.down.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.down[0].nrows()
    }

    /// `h_id I + sum_j (h_u[j] L_up^j + h_d[j] L_down^j)`.
    pub fn filter(&self, block: &[f64]) -> DMatrix<f64> {
        let order = self.order();
        let mut h = &self.down[0] * block[0];
        for j in 1..=order {
            h += &self.up[j] * block[j];
            h += &self.down[j] * block[order + j];
        }
        h
    }
}

/// Separated cell-complex FIR filter of one block.
pub fn fir_filter(block: &[f64], hp: &HodgePair) -> DMatrix<f64> {
    let order = (block.len() - 1) / 2;
    LaplacianPowers::new(hp, order).filter(block)
}

/// Joint FIR filter `sum_{j=0}^{J} h_j (L_down + L_up)^j`.
pub fn joint_fir_filter(coefs: &[f64], hp: &HodgePair) -> DMatrix<f64> {
    let powers = linalg::powers(&hp.laplacian(), coefs.len() - 1);
    let mut h = DMatrix::zeros(hp.dim(), hp.dim());
    for (c, pw) in coefs.iter().zip(&powers) {
        h += pw * *c;
    }
    h
}

/// An assembled dictionary `D = sqrt(N) [H_1 ... H_M]`.
#[derive(Debug, Clone)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
    blocks: usize,
}

impl Dictionary {
    pub fn from_matrix(matrix: DMatrix<f64>, blocks: usize) -> Self {
        Self { matrix, blocks }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    /// Sub-dictionary `D_i` (N x N view).
    pub fn block(&self, i: usize) -> nalgebra::DMatrixView<'_, f64> {
        let n = self.dim();
        self.matrix.columns(i * n, n)
    }
}

/// Assembles `D(h, p)` from cached Laplacian powers.
pub fn assemble_with(params: &DictionaryParams, powers: &LaplacianPowers) -> Result<Dictionary> {
    if powers.order() != params.order() {
        return Err(Error::Dimension(format!(
            "powers cached to order {}, params have order {}",
            powers.order(),
            params.order()
        )));
    }
    let n = powers.dim();
    let scale = (n as f64).sqrt();
    let mut d = DMatrix::zeros(n, n * params.blocks());
    for i in 0..params.blocks() {
        let h = powers.filter(params.block(i)) * scale;
        d.columns_mut(i * n, n).copy_from(&h);
    }
    Ok(Dictionary {
        matrix: d,
        blocks: params.blocks(),
    })
}

pub fn assemble(params: &DictionaryParams, hp: &HodgePair) -> Result<Dictionary> {
    assemble_with(params, &LaplacianPowers::new(hp, params.order()))
}

/// Generalized translation of kernel `g_hat` to cell `m` (0-based):
/// `sqrt(N) sum_l g_hat(l) u_l(m) u_l`.
pub fn translate(spec: &HodgeSpectrum, g_hat: &DVector<f64>, m: usize) -> Result<DVector<f64>> {
    let n = spec.dim();
    if m >= n {
        return Err(Error::Parameter(format!("cell index {m} out of range 0..{n}")));
    }
    if g_hat.len() != n {
        return Err(Error::Dimension("kernel length".into()));
    }
    let u = spec.eigenvectors();
    let weights = DVector::from_iterator(n, (0..n).map(|l| g_hat[l] * u[(m, l)]));
    Ok(u * weights * (n as f64).sqrt())
}

/// Outcome of checking the kernel non-negativity/boundedness and
/// spectrum-coverage assumptions.
#[derive(Debug, Clone, Serialize)]
pub struct FrameReport {
    pub assumption1_ok: bool,
    pub assumption2_ok: bool,
    /// `(block, frequency, kernel value)` outside `[0, d]`.
    pub bound_violations: Vec<(usize, usize, f64)>,
    /// `(frequency, kernel sum)` outside `[d - eps, d + eps]`.
    pub coverage_violations: Vec<(usize, f64)>,
    /// `(d - eps)^2 / M`.
    pub lower_bound: f64,
    /// `(d + eps)^2`.
    pub upper_bound: f64,
}

impl FrameReport {
    pub fn ok(&self) -> bool {
        self.assumption1_ok && self.assumption2_ok
    }
}

pub fn check_frame(params: &DictionaryParams, spec: &HodgeSpectrum, d: f64, eps: f64) -> Result<FrameReport> {
    if !(d > 0.0) || !(eps > 0.0 && eps < d) {
        return Err(Error::Parameter(format!("need d > 0 and 0 < eps < d, got d = {d}, eps = {eps}")));
    }
    let n = spec.dim();
    let kernels: Vec<DVector<f64>> = (0..params.blocks()).map(|i| kernel_eval(params.block(i), spec)).collect();
    let mut bound_violations = Vec::new();
    for (i, g) in kernels.iter().enumerate() {
        for l in 0..n {
            if g[l] < 0.0 || g[l] > d {
                bound_violations.push((i, l, g[l]));
            }
        }
    }
    let mut coverage_violations = Vec::new();
    for l in 0..n {
        let s: f64 = kernels.iter().map(|g| g[l]).sum();
        if s < d - eps || s > d + eps {
            coverage_violations.push((l, s));
        }
    }
    Ok(FrameReport {
        assumption1_ok: bound_violations.is_empty(),
        assumption2_ok: coverage_violations.is_empty(),
        bound_violations,
        coverage_violations,
        lower_bound: (d - eps).powi(2) / params.blocks() as f64,
        upper_bound: (d + eps).powi(2),
    })
}

/// Frame energy `sum_{i,l} <y, [H_i]^l>^2` of a dictionary's atoms after
/// removing the `sqrt(N)` scale, i.e. over the columns of `D / sqrt(N)`.
///
/// The frame bounds of [`FrameReport`] are stated for kernels whose spectrum
/// is that of `H_i`, so this is the quantity they bound.
pub fn frame_energy(dict: &Dictionary, y: &DVector<f64>) -> f64 {
    let n = dict.dim() as f64;
    dict.matrix().tr_mul(y).norm_squared() / n
}

/// Scales every nonzero column to unit norm. Zero columns get weight 0 and
/// therefore stay zero (never selectable by OMP).
pub fn normalize_columns(d: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mut dw = d.clone();
    let mut w = DVector::zeros(d.ncols());
    for (k, mut col) in dw.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 0.0 {
            w[k] = 1.0 / norm;
            col /= norm;
        } else {
            col.fill(0.0);
        }
    }
    (dw, w)
}
