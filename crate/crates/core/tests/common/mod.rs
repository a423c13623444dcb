#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topodict::complex::{enumerate_polygons, CellComplex2, PolygonSelector, Skeleton1};
use topodict::dictionary::{assemble, normalize_columns, LaplacianPowers};
use topodict::qp::{assemble_qp, build_v_vectors, QpProblem, SpectralConstraints};
use topodict::spectral::{constraint_matrix, eigendecompose, DEFAULT_TOL_ZERO};
use topodict::{DictionaryParams, FrequencyClass, HodgeSpectrum};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph with `m` distinct edges among `n` vertices (not necessarily
/// connected) and its polygons up to `max_len`.
pub fn random_complex<R: Rng>(rng: &mut R, n: usize, m: usize, max_len: usize) -> CellComplex2 {
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    pairs.shuffle(rng);
    pairs.truncate(m);
    // random orientation of each edge as listed
    let edges: Vec<(usize, usize)> = pairs
        .into_iter()
        .map(|(a, b)| if rng.random::<bool>() { (a, b) } else { (b, a) })
        .collect();
    let sk = Skeleton1::new(n, &edges).unwrap();
    let polys = enumerate_polygons(&sk, max_len).unwrap();
    CellComplex2::new(sk, polys).unwrap()
}

pub fn random_selector<R: Rng>(rng: &mut R, len: usize) -> PolygonSelector {
    let active: Vec<bool> = (0..len).map(|_| rng.random::<bool>()).collect();
    PolygonSelector::from_active(&active)
}

pub fn random_params<R: Rng>(rng: &mut R, order: usize, blocks: usize, scale: f64) -> DictionaryParams {
    let len = (2 * order + 1) * blocks;
    let h = DVector::from_iterator(len, (0..len).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)));
    DictionaryParams::new(order, blocks, h).unwrap()
}

pub fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal))
}

/// `h_id I + sum_j h_u[j] L_up^j + sum_j h_d[j] L_down^j` by repeated
/// multiplication.
pub fn direct_filter(block: &[f64], l_up: &DMatrix<f64>, l_down: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l_up.nrows();
    let order = (block.len() - 1) / 2;
    let mut h = DMatrix::identity(n, n) * block[0];
    let mut pu = DMatrix::identity(n, n);
    let mut pd = DMatrix::identity(n, n);
    for j in 0..order {
        pu = &pu * l_up;
        pd = &pd * l_down;
        h += &pu * block[1 + j] + &pd * block[1 + order + j];
    }
    h
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

pub fn sparse_codes<R: Rng>(rng: &mut R, rows: usize, cols: usize, k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(rows, cols);
    for t in 0..cols {
        for _ in 0..k {
            s[(rng.random_range(0..rows), t)] = rng.random::<f64>() * 2.0 - 1.0;
        }
    }
    s
}

/// Small structured instance: data term of a random complex with planted codes.
pub fn structured<R: Rng>(rng: &mut R, gamma: f64, d: f64, eps: f64) -> QpProblem {
    let c = random_complex(rng, 6, 9, 3);
    let p = random_selector(rng, c.num_polygons());
    let hp = c.hodge_pair(&p).unwrap();
    let n = c.num_edges();
    let s = sparse_codes(rng, 3 * n, 12, 2);
    let truth = random_params(rng, 2, 3, 0.3);
    let y = assemble(&truth, &hp).unwrap().matrix() * &s + gaussian(rng, n, 12) * 0.05;
    let powers = LaplacianPowers::new(&hp, 2);
    let feats = build_v_vectors(&(&s * (n as f64).sqrt()), &powers, 3).unwrap();
    let spec = eigendecompose(&hp, DEFAULT_TOL_ZERO).unwrap();
    let cons = SpectralConstraints::new(constraint_matrix(&spec, 2).unwrap(), 3, d, eps).unwrap();
    cons.apply(assemble_qp(&y, &feats, gamma).unwrap()).unwrap()
}

// Accelerated projected gradient for box constraints.
pub fn box_oracle(q: &DMatrix<f64>, r: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, iters: usize) -> DVector<f64> {
    let step = 1.0 / (2.0 * spectral_norm(q));
    let clamp = |x: DVector<f64>| DVector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(lo[i], hi[i])));
    let mut x = clamp(DVector::zeros(r.len()));
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = q * &z * 2.0 - r;
        let next = clamp(&z - grad * step);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    x
}

/// Accelerated projected gradient ascent on the dual of
/// `min h^T Q h - r^T h, lo <= A h <= hi`. Returns the best dual value, a
/// lower bound on the optimum.
pub fn dual_bound(problem: &QpProblem, iters: usize) -> f64 {
    let g = &problem.q * 2.0;
    let ginv = g.clone().try_inverse().unwrap();
    let a = &problem.a;
    let m = a.nrows();
    let lip = 2.0 * spectral_norm(&(a * &ginv * a.transpose()));
    let step = 1.0 / lip;
    let primal = |w: &DVector<f64>| &ginv * (a.transpose() * w + &problem.r);
    let value = |mu: &DVector<f64>, nu: &DVector<f64>| {
        let w = mu - nu;
        let v = a.transpose() * &w + &problem.r;
        // -(1/2) v^T G^{-1} v with G = 2Q
        let mut val = -0.5 * v.dot(&(&ginv * &v));
        for k in 0..m {
            if problem.lo[k].is_finite() {
                val += mu[k] * problem.lo[k];
            }
            if problem.hi[k].is_finite() {
                val -= nu[k] * problem.hi[k];
            }
        }
        val
    };
    let proj = |x: DVector<f64>, bound: &DVector<f64>| {
        DVector::from_iterator(m, (0..m).map(|k| if bound[k].is_finite() { x[k].max(0.0) } else { 0.0 }))
    };
    let (mut mu, mut nu) = (DVector::zeros(m), DVector::zeros(m));
    let (mut ymu, mut ynu) = (mu.clone(), nu.clone());
    let mut t = 1.0f64;
    let mut best = f64::NEG_INFINITY;
    for it in 0..iters {
        let x = primal(&(&ymu - &ynu));
        let ax = a * &x;
        let mu_next = proj(&ymu + (&problem.lo - &ax) * step, &problem.lo);
        let nu_next = proj(&ynu + (&ax - &problem.hi) * step, &problem.hi);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        ymu = &mu_next + (&mu_next - &mu) * beta;
        ynu = &nu_next + (&nu_next - &nu) * beta;
        mu = mu_next;
        nu = nu_next;
        t = t_next;
        if it % 100 == 0 || it + 1 == iters {
            best = best.max(value(&mu, &nu));
        }
    }
    best
}

// Feasible by construction: identity parts split 0.9 d, polynomial parts
// bounded by rho per block, so every kernel lies in [0, d] and every
// frequency sum in [0.9 d, 0.95 d].
pub fn feasible_params<R: Rng>(rng: &mut R, spec: &HodgeSpectrum, order: usize, blocks: usize, d: f64) -> DictionaryParams {
    let w: Vec<f64> = (0..blocks).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = w.iter().sum();
    let rho = 0.05 * d / (order * blocks) as f64;
    let lu = spec.max_eigenvalue(FrequencyClass::Upper).max(1.0);
    let ld = spec.max_eigenvalue(FrequencyClass::Lower).max(1.0);
    let mut blocks_out = Vec::new();
    for wi in &w {
        let mut b = vec![0.9 * d * wi / total];
        for j in 1..=order {
            b.push(rng.random::<f64>() * rho / lu.powi(j as i32));
        }
        for j in 1..=order {
            b.push(rng.random::<f64>() * rho / ld.powi(j as i32));
        }
        blocks_out.push(b);
    }
    DictionaryParams::from_blocks(order, &blocks_out).unwrap()
}

pub fn unit_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    normalize_columns(&gaussian(rng, rows, cols)).0
}

pub fn coherence(d: &DMatrix<f64>) -> f64 {
    let g = d.transpose() * d;
    let mut mu = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..i {
            mu = mu.max(g[(i, j)].abs());
        }
    }
    mu
}
