//! Alternating dictionary and topology learning.
//!
//! All learners alternate a coefficient update (constrained QP over `h`) with
//! a sparse-coding update (OMP over `S`). Either update is kept only when it
//! does not increase the objective `|Y - D(h, p) S|_F^2 + gamma |h|^2`, so the
//! recorded trace is non-increasing. GTDL then removes one polygon at a time
//! while that does not increase the data term; RTDL takes proximal-gradient
//! steps on relaxed polygon weights.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{CellComplex2, PolygonSelector};
use crate::dictionary::{assemble, DictionaryParams, LaplacianPowers, Parameterization};
use crate::error::{Error, Result};
use crate::qp::{
    assemble_qp, block_diag, build_v_vectors, solve_qp, QpProblem, SolverOptions, SpectralConstraints,
    DEFAULT_GAMMA, DEFAULT_KKT_TOL,
};
use crate::sparse_coding::{sparse_code, SparseCode, DEFAULT_RES_TOL};
use crate::spectral::{constraint_matrix, eigendecompose, FrequencyClass, HodgeSpectrum, DEFAULT_TOL_ZERO};
use crate::topo_opt::{free_coordinates, TopologyObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gtdl,
    Rtdl,
    Fourier,
    EdgeLaplacian,
    JointHodge,
    SeparatedHodge,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Gtdl,
        Method::Rtdl,
        Method::Fourier,
        Method::EdgeLaplacian,
        Method::JointHodge,
        Method::SeparatedHodge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gtdl => "gtdl",
            Self::Rtdl => "rtdl",
            Self::Fourier => "fourier",
            Self::EdgeLaplacian => "edge_laplacian",
            Self::JointHodge => "joint_hodge",
            Self::SeparatedHodge => "separated_hodge",
        }
    }

    /// Parses full names and the short forms `edge`, `joint`, `separated`.
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gtdl" => Self::Gtdl,
            "rtdl" => Self::Rtdl,
            "fourier" => Self::Fourier,
            "edge" | "edge_laplacian" => Self::EdgeLaplacian,
            "joint" | "joint_hodge" => Self::JointHodge,
            "separated" | "separated_hodge" => Self::SeparatedHodge,
            _ => return None,
        })
    }

    /// Coefficient family, `None` for the fixed Fourier basis.
    pub fn parameterization(self) -> Option<Parameterization> {
        match self {
            Self::Fourier => None,
            Self::EdgeLaplacian => Some(Parameterization::LowerOnly),
            Self::JointHodge => Some(Parameterization::Joint),
            Self::Gtdl | Self::Rtdl | Self::SeparatedHodge => Some(Parameterization::Separated),
        }
    }

    pub fn learns_topology(self) -> bool {
        matches!(self, Self::Gtdl | Self::Rtdl)
    }
}

/// How a proposed topology change is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyScoring {
    /// Data term with `h` and `S` held at their current values.
    FixedCodes,
    /// Data term after re-solving `S` by OMP at the proposed topology.
    #[default]
    Recoded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    pub method: Method,
    pub k0: usize,
    /// Polynomial order `J`.
    pub order: usize,
    /// Number of sub-dictionaries `M`.
    pub blocks: usize,
    pub gamma: f64,
    /// Hard-threshold parameter of the relaxed topology update.
    pub lambda: f64,
    /// Fixed step for the relaxed update; `None` uses `1 / L` with `L`
    /// estimated at every iteration.
    pub mu: Option<f64>,
    /// Alternating rounds per topology (GTDL, baselines) or total iterations
    /// (RTDL).
    pub i_max: usize,
    pub d: f64,
    pub eps: f64,
    pub seed: u64,
    pub kkt_tol: f64,
    /// OMP residual tolerance relative to each signal's norm.
    pub res_tol: f64,
    pub tol_zero: f64,
    /// Stop an inner loop early when a round improves the objective by less
    /// than this fraction. `None` always runs `i_max` rounds.
    pub early_exit: Option<f64>,
    /// Step halvings allowed in one relaxed topology update.
    pub max_halvings: usize,
    /// Scoring of GTDL removals and of RTDL descent checks.
    pub scoring: TopologyScoring,
    /// When the best GTDL removal fails the fixed-`h` test, re-fit `(h, S)`
    /// at the reduced topology and keep the removal if the objective does
    /// not increase.
    pub lookahead: bool,
    /// Independent random initializations; the run with the lowest final
    /// training objective is returned.
    pub restarts: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            method: Method::Gtdl,
            k0: 5,
            order: 2,
            blocks: 3,
            gamma: DEFAULT_GAMMA,
            lambda: 0.045,
            mu: None,
            i_max: 10,
            d: 1.0,
            eps: 0.5,
            seed: 0,
            kkt_tol: DEFAULT_KKT_TOL,
            res_tol: DEFAULT_RES_TOL,
            tol_zero: DEFAULT_TOL_ZERO,
            early_exit: Some(1e-8),
            max_halvings: 30,
            scoring: TopologyScoring::default(),
            lookahead: true,
            restarts: 2,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Parameter(format!("{field}: {why}")));
        if self.k0 == 0 {
            return bad("k0", "must be >= 1".into());
        }
        if self.order == 0 {
            return bad("order", "must be >= 1".into());
        }
        if self.blocks == 0 {
            return bad("blocks", "must be >= 1".into());
        }
        if self.i_max == 0 {
            return bad("i_max", "must be >= 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts", "must be >= 1".into());
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", format!("must be > 0, got {}", self.gamma));
        }
        if !(self.lambda > 0.0 && self.lambda < 0.5) {
            return bad("lambda", format!("must lie in (0, 0.5), got {}", self.lambda));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return bad("mu", format!("must be > 0, got {mu}"));
            }
        }
        if !(self.d > 0.0) {
            return bad("d", format!("must be > 0, got {}", self.d));
        }
        if !(self.eps > 0.0 && self.eps < self.d) {
            return bad("eps", format!("must lie in (0, d = {}), got {}", self.d, self.eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Qp,
    SparseCoding,
    Topology,
    Binarize,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Self::Init => "init",
            Self::Qp => "qp",
            Self::SparseCoding => "sparse_coding",
            Self::Topology => "topology",
            Self::Binarize => "binarize",
        }
    }
}

/// Objective value after one phase. `outer` counts topology updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub outer: usize,
    pub phase: Phase,
    pub objective: f64,
    /// Whether the phase's proposal was kept.
    pub accepted: bool,
}

/// Wall-clock seconds spent per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub qp: f64,
    pub sparse_coding: f64,
    pub topology: f64,
    pub total: f64,
}

/// A trained representation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub method: Method,
    pub order: usize,
    pub blocks: usize,
    /// Filter coefficients; absent for the Fourier basis.
    pub params: Option<DictionaryParams>,
    pub p: PolygonSelector,
    pub d: f64,
    pub eps: f64,
}

impl Model {
    /// Reconstructs `y` with `k0` atoms per column; returns the reconstruction
    /// and the coefficients (TFT coefficients for the Fourier basis).
    pub fn reconstruct(
        &self,
        complex: &CellComplex2,
        y: &DMatrix<f64>,
        k0: usize,
        res_tol: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let hp = complex.hodge_pair(&self.p)?;
        match &self.params {
            None => {
                let spec = eigendecompose(&hp, DEFAULT_TOL_ZERO)?;
                let coefs = top_k_tft(&spec, y, k0)?;
                Ok((spec.eigenvectors() * &coefs, coefs))
            }
            Some(params) => {
                let dict = assemble(params, &hp)?;
                let code = sparse_code(&dict, y, k0, res_tol)?;
                Ok((dict.matrix() * &code.s, code.s))
            }
        }
    }
}

/// Keeps the `k0` largest-magnitude TFT coefficients of each column (lowest
/// index on ties).
pub fn top_k_tft(spec: &HodgeSpectrum, y: &DMatrix<f64>, k0: usize) -> Result<DMatrix<f64>> {
    if y.nrows() != spec.dim() {
        return Err(Error::Dimension(format!(
            "signals have {} rows, spectrum has dimension {}",
            y.nrows(),
            spec.dim()
        )));
    }
    let full = spec.eigenvectors().tr_mul(y);
    let mut out = DMatrix::zeros(full.nrows(), full.ncols());
    for t in 0..full.ncols() {
        let mut idx: Vec<usize> = (0..full.nrows()).collect();
        idx.sort_by(|&a, &b| full[(b, t)].abs().total_cmp(&full[(a, t)].abs()).then(a.cmp(&b)));
        for &l in idx.iter().take(k0) {
            out[(l, t)] = full[(l, t)];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub model: Model,
    /// Training coefficients: `M N x T` sparse codes, or TFT coefficients.
    pub code: DMatrix<f64>,
    pub trace: Vec<TraceEntry>,
    pub timings: Timings,
    /// RTDL's relaxed weights before binarization.
    pub relaxed_p: Option<PolygonSelector>,
}

impl LearnResult {
    /// Final objective value.
    pub fn objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |e| e.objective)
    }
}

/// `(d, eps)` from reference coefficients: `d` is the largest per-block
/// kernel bound `g_max`, `eps = min(sum g_min - d, d - sum g_max)` floored
/// at `1e-6 d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub d: f64,
    pub eps: f64,
    /// The raw `eps` was below the floor.
    pub clamped: bool,
    pub raw_eps: f64,
}

pub fn select_bounds(h_ref: &DictionaryParams, spec: &HodgeSpectrum) -> Result<Bounds> {
    let lmax_d = spec.max_eigenvalue(FrequencyClass::Lower);
    let lmin_d = spec.min_eigenvalue(FrequencyClass::Lower);
    let lmax_u = spec.max_eigenvalue(FrequencyClass::Upper);
    let lmin_u = spec.min_eigenvalue(FrequencyClass::Upper);
    let poly = |coefs: &[f64], lambda: f64| -> f64 {
        let mut pow = 1.0;
        coefs
            .iter()
            .map(|c| {
                pow *= lambda;
                c * pow
            })
            .sum()
    };
    let mut g_max = Vec::with_capacity(h_ref.blocks());
    let mut g_min = Vec::with_capacity(h_ref.blocks());
    for i in 0..h_ref.blocks() {
        let id = h_ref.identity_coef(i);
        g_max.push(id + poly(h_ref.lower(i), lmax_d) + poly(h_ref.upper(i), lmax_u));
        g_min.push(id + poly(h_ref.lower(i), lmin_d) + poly(h_ref.upper(i), lmin_u));
    }
    let d = g_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(d > 0.0) {
        return Err(Error::Parameter(format!("reference kernels give d = {d}; supply (d, eps) explicitly")));
    }
    let delta_max = d - g_max.iter().sum::<f64>();
    let delta_min = g_min.iter().sum::<f64>() - d;
    let raw_eps = delta_min.min(delta_max);
    let floor = 1e-6 * d;
    Ok(Bounds {
        d,
        eps: raw_eps.max(floor),
        clamped: raw_eps < floor,
        raw_eps,
    })
}

struct State {
    params: DictionaryParams,
    code: SparseCode,
    p: PolygonSelector,
    value: f64,
}

struct Engine<'a> {
    complex: &'a CellComplex2,
    y: &'a DMatrix<f64>,
    cfg: &'a LearnConfig,
    par: Parameterization,
    expansion: DMatrix<f64>,
    obj: TopologyObjective<'a>,
    trace: Vec<TraceEntry>,
    timings: Timings,
    outer: usize,
    restart: u64,
}

impl<'a> Engine<'a> {
    fn new(
        complex: &'a CellComplex2,
        y: &'a DMatrix<f64>,
        cfg: &'a LearnConfig,
        par: Parameterization,
        restart: usize,
    ) -> Result<Self> {
        Ok(Self {
            restart: restart as u64,
            complex,
            y,
            cfg,
            par,
            expansion: block_diag(&par.expansion(cfg.order), cfg.blocks),
            obj: TopologyObjective::new(complex, y, cfg.gamma)?,
            trace: Vec::new(),
            timings: Timings::default(),
            outer: 0,
        })
    }

    fn record(&mut self, phase: Phase, objective: f64, accepted: bool) {
        self.trace.push(TraceEntry {
            iteration: self.trace.len(),
            outer: self.outer,
            phase,
            objective,
            accepted,
        });
    }

    fn objective(&self, params: &DictionaryParams, code: &SparseCode, p: &PolygonSelector) -> Result<f64> {
        self.obj.objective(params, code, p)
    }

    fn setting(&self, p: &PolygonSelector) -> Result<(LaplacianPowers, SpectralConstraints)> {
        let hp = self.complex.hodge_pair(p)?;
        let spec = eigendecompose(&hp, self.cfg.tol_zero)?;
        let f = constraint_matrix(&spec, self.cfg.order)?;
        Ok((
            LaplacianPowers::new(&hp, self.cfg.order),
            SpectralConstraints::new(f, self.cfg.blocks, self.cfg.d, self.cfg.eps)?,
        ))
    }

    fn expand(&self, g: &DVector<f64>) -> Result<DictionaryParams> {
        DictionaryParams::new(self.cfg.order, self.cfg.blocks, &self.expansion * g)
    }

    fn solve(&self, problem: QpProblem) -> Result<Option<DictionaryParams>> {
        let reduced = problem.reduce(&self.par.expansion(self.cfg.order));
        let opts = SolverOptions {
            kkt_tol: self.cfg.kkt_tol,
            ..SolverOptions::default()
        };
        match solve_qp(&reduced, opts) {
            Ok(sol) => Ok(Some(self.expand(&sol.h)?)),
            Err(Error::NotConverged { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn code(&self, params: &DictionaryParams, p: &PolygonSelector) -> Result<SparseCode> {
        let dict = assemble(params, &self.complex.hodge_pair(p)?)?;
        sparse_code(&dict, self.y, self.cfg.k0, self.cfg.res_tol)
    }

    /// Random coefficients projected onto the constraint set, then one
    /// sparse-coding pass.
    fn init(&mut self, p: PolygonSelector) -> Result<State> {
        // restart r draws from stream r of the seed
        let mut rng = ChaCha20Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.restart);
        let free = self.expansion.ncols();
        let g0 = DVector::from_iterator(free, (0..free).map(|_| rng.random::<f64>()));
        let h0 = &self.expansion * g0;
        let (_, cons) = self.setting(&p)?;
        let dim = h0.len();
        let projection = cons.apply(QpProblem {
            q: DMatrix::identity(dim, dim),
            r: &h0 * 2.0,
            a: DMatrix::zeros(0, dim),
            lo: DVector::zeros(0),
            hi: DVector::zeros(0),
            gamma: 0.0,
            constant: h0.norm_squared(),
            bounds: None,
        })?;
        let start = Instant::now();
        let params = self
            .solve(projection)?
            .ok_or_else(|| Error::Parameter("initial projection did not converge".into()))?;
        self.timings.qp += start.elapsed().as_secs_f64();
        let start = Instant::now();
        let code = self.code(&params, &p)?;
        self.timings.sparse_coding += start.elapsed().as_secs_f64();
        let value = self.objective(&params, &code, &p)?;
        self.record(Phase::Init, value, true);
        Ok(State { params, code, p, value })
    }

    fn qp_step(&mut self, state: &mut State) -> Result<()> {
        let start = Instant::now();
        let (powers, cons) = self.setting(&state.p)?;
        let n = self.complex.num_edges() as f64;
        let s_bar = &state.code.s * n.sqrt();
        let features = build_v_vectors(&s_bar, &powers, self.cfg.blocks)?;
        let problem = cons.apply(assemble_qp(self.y, &features, self.cfg.gamma)?)?;
        let candidate = self.solve(problem)?;
        self.timings.qp += start.elapsed().as_secs_f64();
        let mut accepted = false;
        if let Some(params) = candidate {
            let value = self.objective(&params, &state.code, &state.p)?;
            if value <= state.value {
                state.params = params;
                state.value = value;
                accepted = true;
            }
        }
        self.record(Phase::Qp, state.value, accepted);
        Ok(())
    }

    fn omp_step(&mut self, state: &mut State) -> Result<()> {
        let start = Instant::now();
        let code = self.code(&state.params, &state.p)?;
        self.timings.sparse_coding += start.elapsed().as_secs_f64();
        let value = self.objective(&state.params, &code, &state.p)?;
        let accepted = value <= state.value;
        if accepted {
            state.code = code;
            state.value = value;
        }
        self.record(Phase::SparseCoding, state.value, accepted);
        Ok(())
    }

    fn inner(&mut self, state: &mut State, rounds: usize) -> Result<()> {
        for _ in 0..rounds {
            let before = state.value;
            self.qp_step(state)?;
            self.omp_step(state)?;
            if let Some(tol) = self.cfg.early_exit {
                if before - state.value <= tol * before.abs() {
                    break;
                }
            }
        }
        Ok(())
    }

    fn finish(self, state: State, method: Method, relaxed_p: Option<PolygonSelector>, started: Instant) -> LearnResult {
        let mut timings = self.timings;
        timings.total = started.elapsed().as_secs_f64();
        LearnResult {
            model: Model {
                method,
                order: self.cfg.order,
                blocks: self.cfg.blocks,
                params: Some(state.params),
                p: state.p,
                d: self.cfg.d,
                eps: self.cfg.eps,
            },
            code: state.code.s,
            trace: self.trace,
            timings,
            relaxed_p,
        }
    }
}

fn check_inputs(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig) -> Result<()> {
    cfg.validate()?;
    if y.nrows() != complex.num_edges() {
        return Err(Error::Dimension(format!(
            "signals have {} rows, complex has {} edges",
            y.nrows(),
            complex.num_edges()
        )));
    }
    if y.ncols() == 0 {
        return Err(Error::Dimension("no training signals".into()));
    }
    Ok(())
}

/// Greedy topology learning: start from every candidate polygon, fit, then
/// repeatedly drop the polygon whose removal lowers the data term most. A
/// removal that would increase the data term is not applied and ends the
/// search, unless `lookahead` is set and a re-fit at the reduced topology
/// brings the objective back down. Ties keep removing. With
/// [`TopologyScoring::Recoded`] the codes are re-solved for each candidate
/// and the winner's codes are kept.
pub fn gtdl(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig) -> Result<LearnResult> {
    check_inputs(y, complex, cfg)?;
    best_of(cfg, |r| gtdl_once(y, complex, cfg, r))
}

fn gtdl_once(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig, restart: usize) -> Result<LearnResult> {
    let started = Instant::now();
    let mut eng = Engine::new(complex, y, cfg, Parameterization::Separated, restart)?;
    let mut state = eng.init(PolygonSelector::ones(complex.num_polygons()))?;
    loop {
        eng.inner(&mut state, cfg.i_max)?;
        if state.p.num_active() == 0 {
            break;
        }
        let start = Instant::now();
        let err = eng.obj.data_fit(&state.params, &state.code, &state.p)?;
        let choice = match cfg.scoring {
            TopologyScoring::FixedCodes => eng
                .obj
                .greedy_step(&state.params, &state.code, &state.p)?
                .map(|c| (c, None)),
            TopologyScoring::Recoded => eng
                .obj
                .greedy_step_recoded(&state.params, &state.p, cfg.k0, cfg.res_tol)?
                .map(|(c, code)| (c, Some(code))),
        };
        eng.timings.topology += start.elapsed().as_secs_f64();
        let Some((choice, code)) = choice else { break };
        let p = state.p.without(choice.polygon);
        let code = code.unwrap_or_else(|| state.code.clone());
        if choice.value > err {
            if !cfg.lookahead {
                break;
            }
            let start = Instant::now();
            let value = eng.objective(&state.params, &code, &p)?;
            let mut trial = State {
                params: state.params.clone(),
                code,
                p,
                value,
            };
            // the trial's own entries start above the current value; only
            // its outcome is recorded
            let mark = eng.trace.len();
            eng.inner(&mut trial, cfg.i_max)?;
            eng.trace.truncate(mark);
            eng.timings.topology += start.elapsed().as_secs_f64();
            if trial.value > state.value {
                break;
            }
            state = trial;
        } else {
            state.p = p;
            state.code = code;
            state.value = eng.objective(&state.params, &state.code, &state.p)?;
        }
        eng.outer += 1;
        eng.record(Phase::Topology, state.value, true);
    }
    Ok(eng.finish(state, Method::Gtdl, None, started))
}

/// Relaxed topology learning: every iteration runs one coefficient update,
/// one sparse-coding update and one proximal-gradient step on the polygon
/// weights. The final weights are thresholded at 0.5 and `(h, S)` re-fit once
/// at the binary topology.
pub fn rtdl(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig) -> Result<LearnResult> {
    check_inputs(y, complex, cfg)?;
    best_of(cfg, |r| rtdl_once(y, complex, cfg, r))
}

fn rtdl_once(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig, restart: usize) -> Result<LearnResult> {
    let started = Instant::now();
    let mut eng = Engine::new(complex, y, cfg, Parameterization::Separated, restart)?;
    let p0 = PolygonSelector::relaxed(vec![1.0; complex.num_polygons()])?;
    let mut state = eng.init(p0)?;
    let mut last_mu: Option<f64> = None;
    for _ in 0..cfg.i_max {
        eng.qp_step(&mut state)?;
        eng.omp_step(&mut state)?;
        let start = Instant::now();
        let mu = match cfg.mu {
            Some(mu) => Some(mu),
            None => {
                let grad = eng.obj.grad_p(&state.params, &state.code, &state.p)?;
                let free = free_coordinates(&state.p, &grad);
                let l = eng.obj.lipschitz_estimate_on(&state.params, &state.code, &state.p, &free)?;
                let base = (l > 0.0).then(|| 1.0 / l);
                match (base, last_mu) {
                    (Some(b), Some(m)) => Some(b.max(2.0 * m)),
                    (b, _) => b,
                }
            }
        };
        let mut accepted = false;
        if let Some(mu) = mu {
            let (step, code) = match cfg.scoring {
                TopologyScoring::FixedCodes => (
                    eng.obj
                        .rtdl_step(&state.params, &state.code, &state.p, mu, cfg.lambda, cfg.max_halvings)?,
                    None,
                ),
                TopologyScoring::Recoded => eng.obj.rtdl_step_recoded(
                    &state.params,
                    &state.code,
                    &state.p,
                    mu,
                    cfg.lambda,
                    cfg.max_halvings,
                    cfg.k0,
                    cfg.res_tol,
                )?,
            };
            if step.accepted {
                last_mu = Some(step.mu);
            }
            if step.accepted && step.p != state.p {
                state.p = step.p;
                if let Some(code) = code {
                    state.code = code;
                }
                state.value = eng.objective(&state.params, &state.code, &state.p)?;
                accepted = true;
            }
        }
        eng.timings.topology += start.elapsed().as_secs_f64();
        eng.outer += 1;
        eng.record(Phase::Topology, state.value, accepted);
    }
    let relaxed = state.p.clone();
    state.p = relaxed.binarize();
    state.value = eng.objective(&state.params, &state.code, &state.p)?;
    eng.record(Phase::Binarize, state.value, true);
    eng.inner(&mut state, 1)?;
    Ok(eng.finish(state, Method::Rtdl, Some(relaxed), started))
}

/// Baselines on the full candidate topology: the Fourier basis (top-`K0` TFT
/// coefficients, nothing learned) or alternating QP/OMP with a fixed
/// coefficient family.
pub fn learn_fixed(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig) -> Result<LearnResult> {
    check_inputs(y, complex, cfg)?;
    let started = Instant::now();
    let p = PolygonSelector::ones(complex.num_polygons());
    let Some(par) = cfg.method.parameterization() else {
        let model = Model {
            method: Method::Fourier,
            order: cfg.order,
            blocks: cfg.blocks,
            params: None,
            p,
            d: cfg.d,
            eps: cfg.eps,
        };
        let start = Instant::now();
        let (recon, code) = model.reconstruct(complex, y, cfg.k0, cfg.res_tol)?;
        let coding = start.elapsed().as_secs_f64();
        let objective = (y - recon).norm_squared();
        return Ok(LearnResult {
            model,
            code,
            trace: vec![TraceEntry {
                iteration: 0,
                outer: 0,
                phase: Phase::SparseCoding,
                objective,
                accepted: true,
            }],
            timings: Timings {
                sparse_coding: coding,
                total: started.elapsed().as_secs_f64(),
                ..Timings::default()
            },
            relaxed_p: None,
        });
    };
    best_of(cfg, |r| {
        let started = Instant::now();
        let mut eng = Engine::new(complex, y, cfg, par, r)?;
        let mut state = eng.init(p.clone())?;
        eng.inner(&mut state, cfg.i_max)?;
        Ok(eng.finish(state, cfg.method, None, started))
    })
}

/// Runs `cfg.restarts` initializations and keeps the lowest final objective
/// (earliest on ties). Timings cover all runs.
fn best_of(cfg: &LearnConfig, run: impl Fn(usize) -> Result<LearnResult>) -> Result<LearnResult> {
    let mut best = run(0)?;
    let mut timings = best.timings;
    for r in 1..cfg.restarts {
        let next = run(r)?;
        timings.qp += next.timings.qp;
        timings.sparse_coding += next.timings.sparse_coding;
        timings.topology += next.timings.topology;
        timings.total += next.timings.total;
        if next.objective() < best.objective() {
            best = next;
        }
    }
    best.timings = timings;
    Ok(best)
}

/// Dispatches on `cfg.method`.
pub fn learn(y: &DMatrix<f64>, complex: &CellComplex2, cfg: &LearnConfig) -> Result<LearnResult> {
    match cfg.method {
        Method::Gtdl => gtdl(y, complex, cfg),
        Method::Rtdl => rtdl(y, complex, cfg),
        _ => learn_fixed(y, complex, cfg),
    }
}
