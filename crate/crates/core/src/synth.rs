//! Synthetic benchmark: random 1-skeleton, random triangle topology, random
//! filter coefficients and planted sparse codes.
//!
//! Randomness is split into independent ChaCha streams derived from one
//! master seed: stream 0 draws the skeleton, stream 1 the topology, and
//! stream `2 + k` the coefficients and codes of dataset `k`. Changing `q_tr`
//! therefore keeps the 1-skeleton, and topologies drawn at increasing `q_tr`
//! are nested.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::complex::{enumerate_polygons, CellComplex2, PolygonSelector, Skeleton1};
use crate::dictionary::{assemble, DictionaryParams};
use crate::error::{Error, Result};
use crate::sparse_coding::SparseCode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_vertices: usize,
    pub n_edges: usize,
    pub q_tr: f64,
    pub t_total: usize,
    pub t_train: usize,
    pub t_test: usize,
    pub k0_gen: usize,
    pub blocks: usize,
    pub order: usize,
    pub n_datasets: usize,
    pub seed: u64,
    /// Longest candidate polygon.
    pub max_len: usize,
    /// Graph draws allowed before giving up on connectivity.
    pub max_resample: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_vertices: 40,
            n_edges: 100,
            q_tr: 0.7,
            t_total: 220,
            t_train: 150,
            t_test: 70,
            k0_gen: 25,
            blocks: 3,
            order: 2,
            n_datasets: 10,
            seed: 0,
            max_len: 3,
            max_resample: 10_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Parameter(format!("{field}: {why}")));
        if !(0.0..=1.0).contains(&self.q_tr) {
            return bad("q_tr", format!("must lie in [0, 1], got {}", self.q_tr));
        }
        if self.t_train + self.t_test > self.t_total {
            return bad(
                "t_train",
                format!("t_train + t_test = {} exceeds t_total = {}", self.t_train + self.t_test, self.t_total),
            );
        }
        let max_edges = self.n_vertices * self.n_vertices.saturating_sub(1) / 2;
        if self.n_edges > max_edges {
            return bad("n_edges", format!("{} vertices allow at most {max_edges} edges", self.n_vertices));
        }
        if self.n_vertices > 1 && self.n_edges + 1 < self.n_vertices {
            return bad("n_edges", format!("{} edges cannot connect {} vertices", self.n_edges, self.n_vertices));
        }
        if self.blocks == 0 {
            return bad("blocks", "must be >= 1".into());
        }
        if self.order == 0 {
            return bad("order", "must be >= 1".into());
        }
        if self.k0_gen == 0 || self.k0_gen > self.blocks * self.n_edges {
            return bad("k0_gen", format!("must lie in 1..={}", self.blocks * self.n_edges));
        }
        if self.max_len < 3 {
            return bad("max_len", "must be >= 3".into());
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Uniform `G(n, m)` graph, redrawn until connected.
pub fn gen_skeleton(cfg: &SynthConfig) -> Result<Skeleton1> {
    let mut rng = stream(cfg.seed, 0);
    let n = cfg.n_vertices;
    let pairs = n * n.saturating_sub(1) / 2;
    // row-major enumeration of pairs (a, b), a < b
    let pair_at = |mut k: usize| {
        let mut a = 0;
        while k >= n - 1 - a {
            k -= n - 1 - a;
            a += 1;
        }
        (a, a + 1 + k)
    };
    for _ in 0..cfg.max_resample.max(1) {
        let chosen = index::sample(&mut rng, pairs, cfg.n_edges);
        let edges: Vec<(usize, usize)> = chosen.iter().map(pair_at).collect();
        let sk = Skeleton1::new(n, &edges)?;
        if sk.num_components() <= 1 {
            return Ok(sk);
        }
    }
    Err(Error::Generation(format!(
        "no connected G({n}, {}) graph in {} draws",
        cfg.n_edges, cfg.max_resample
    )))
}

/// Skeleton, candidate polygons and a Bernoulli(`q_tr`) selection of them.
pub fn gen_complex(cfg: &SynthConfig) -> Result<(CellComplex2, PolygonSelector)> {
    cfg.validate()?;
    let sk = gen_skeleton(cfg)?;
    let polys = enumerate_polygons(&sk, cfg.max_len)?;
    let complex = CellComplex2::new(sk, polys)?;
    let mut rng = stream(cfg.seed, 1);
    let active: Vec<bool> = (0..complex.num_polygons())
        .map(|_| rng.random::<f64>() < cfg.q_tr)
        .collect();
    Ok((complex, PolygonSelector::from_active(&active)))
}

fn lambda_max(l: &DMatrix<f64>) -> f64 {
    if l.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(l.clone()).eigenvalues.max().max(0.0)
}

/// Coefficients drawn uniformly in `[0, 1]`, with the power-`j` lower and
/// upper coefficients divided by `lambda_max^j` of the matching Laplacian.
/// Upper coefficients are zero when the upper Laplacian vanishes.
pub fn gen_params<R: Rng>(
    complex: &CellComplex2,
    p_true: &PolygonSelector,
    blocks: usize,
    order: usize,
    rng: &mut R,
) -> Result<DictionaryParams> {
    let lmax_d = lambda_max(&complex.lower_laplacian());
    let lmax_u = lambda_max(&complex.upper_laplacian(p_true)?);
    let mut params = DictionaryParams::zeros(order, blocks);
    for i in 0..blocks {
        let b = params.block_mut(i);
        b[0] = rng.random::<f64>();
        for j in 1..=order {
            let u = rng.random::<f64>();
            b[j] = if lmax_u > 1e-12 { u / lmax_u.powi(j as i32) } else { 0.0 };
        }
        for j in 1..=order {
            let u = rng.random::<f64>();
            b[order + j] = if lmax_d > 1e-12 { u / lmax_d.powi(j as i32) } else { 0.0 };
        }
    }
    Ok(params)
}

/// Codes with exactly `k0` standard-normal nonzeros per column at uniformly
/// random rows.
pub fn gen_codes<R: Rng>(atoms: usize, signals: usize, k0: usize, rng: &mut R) -> SparseCode {
    let mut s = DMatrix::zeros(atoms, signals);
    for t in 0..signals {
        for k in index::sample(rng, atoms, k0) {
            let mut v: f64 = rng.sample(StandardNormal);
            while v == 0.0 {
                v = rng.sample(StandardNormal);
            }
            s[(k, t)] = v;
        }
    }
    SparseCode { s }
}

/// Ground truth behind a synthetic dataset.
#[derive(Debug, Clone)]
pub struct PlantedTruth {
    pub complex: CellComplex2,
    pub p: PolygonSelector,
    pub params: DictionaryParams,
    pub codes: SparseCode,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// All `t_total` signals; the first `t_train` columns train, the next
    /// `t_test` test.
    pub signals: DMatrix<f64>,
    pub t_train: usize,
    pub t_test: usize,
    pub truth: PlantedTruth,
}

impl SynthDataset {
    pub fn train(&self) -> DMatrix<f64> {
        self.signals.columns(0, self.t_train).into_owned()
    }

    pub fn test(&self) -> DMatrix<f64> {
        self.signals.columns(self.t_train, self.t_test).into_owned()
    }
}

/// Dataset `index` of the suite defined by `cfg`.
pub fn gen_dataset(cfg: &SynthConfig, index: usize) -> Result<SynthDataset> {
    let (complex, p) = gen_complex(cfg)?;
    gen_dataset_on(cfg, index, complex, p)
}

/// Dataset `index` on an already generated complex and topology.
pub fn gen_dataset_on(cfg: &SynthConfig, index: usize, complex: CellComplex2, p: PolygonSelector) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, 2 + index as u64);
    let params = gen_params(&complex, &p, cfg.blocks, cfg.order, &mut rng)?;
    let dict = assemble(&params, &complex.hodge_pair(&p)?)?;
    let codes = gen_codes(dict.num_atoms(), cfg.t_total, cfg.k0_gen, &mut rng);
    let signals = dict.matrix() * &codes.s;
    Ok(SynthDataset {
        signals,
        t_train: cfg.t_train,
        t_test: cfg.t_test,
        truth: PlantedTruth {
            complex,
            p,
            params,
            codes,
        },
    })
}

/// All `n_datasets` datasets, sharing one complex and topology.
pub fn gen_suite(cfg: &SynthConfig) -> Result<Vec<SynthDataset>> {
    let (complex, p) = gen_complex(cfg)?;
    (0..cfg.n_datasets)
        .map(|k| gen_dataset_on(cfg, k, complex.clone(), p.clone()))
        .collect()
}
