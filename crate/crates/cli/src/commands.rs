//! Command execution. Every command takes a resolved [`Command`], writes its
//! outputs under `out` and returns the manifest describing the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use topodict::io::{parse_edge_list, parse_matrix_csv, parse_polygons, to_json, ModelFile, TruthFile};
use topodict::learner::{learn, Method};
use topodict::metrics::{laplacian_nmse, nmse_detailed, topology_error_rate};
use topodict::synth::{gen_complex, gen_dataset_on};
use topodict::{CellComplex2, Error, SynthConfig};

use crate::dataset::{self, read_dataset, read_text, write_dataset, write_text};
use crate::manifest::{combined_hash, hash_file, write_manifest, Command, InputFile, RunManifest, Split};

pub const MODEL: &str = "model.json";
pub const TRACE: &str = "trace.csv";
pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";

fn tool() -> String {
    format!("topodict {}", env!("CARGO_PKG_VERSION"))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

struct Run {
    inputs: Vec<InputFile>,
    outputs: Vec<String>,
    split: Option<Split>,
    timings: BTreeMap<String, f64>,
}

pub fn run(cmd: &Command, out: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let out = out.canonicalize()?;
    let started = Instant::now();
    let mut r = match cmd {
        Command::Generate { config, index } => generate(config, *index, &out)?,
        Command::Train { dataset, split, config } => train(dataset, *split, config, &out)?,
        Command::Evaluate { pairs, k0_sweep, res_tol } => evaluate(pairs, k0_sweep, *res_tol, &out)?,
        Command::Ingest {
            signals,
            edges,
            polygons,
            n_train,
            max_len,
        } => ingest(signals, edges, polygons.as_deref(), *n_train, *max_len, &out)?,
    };
    r.timings.insert("total".into(), started.elapsed().as_secs_f64());
    let m = RunManifest {
        tool: tool(),
        command: cmd.clone(),
        seed: cmd.seed(),
        input_hash: combined_hash(&r.inputs),
        inputs: r.inputs,
        out: out.clone(),
        outputs: r.outputs,
        dataset_split: r.split,
        timings: r.timings,
    };
    write_manifest(&m)?;
    Ok(m)
}

fn dataset_truth(cfg: &SynthConfig, ds: &topodict::SynthDataset) -> TruthFile {
    TruthFile {
        q_tr: cfg.q_tr,
        k0_gen: cfg.k0_gen,
        order: cfg.order,
        blocks: cfg.blocks,
        h: ds.truth.params.to_blocks(),
        p: ds.truth.p.values().to_vec(),
    }
}

fn generate(cfg: &SynthConfig, index: Option<usize>, out: &Path) -> Result<Run> {
    cfg.validate()?;
    let split = Split {
        t_train: cfg.t_train,
        t_test: cfg.t_test,
    };
    let (complex, p) = gen_complex(cfg)?;
    let indices: Vec<usize> = match index {
        Some(k) => vec![k],
        None => (0..cfg.n_datasets).collect(),
    };
    let sets = indices
        .par_iter()
        .map(|&k| gen_dataset_on(cfg, k, complex.clone(), p.clone()))
        .collect::<topodict::Result<Vec<_>>>()?;
    let mut outputs = Vec::new();
    for (&k, ds) in indices.iter().zip(&sets) {
        let truth = dataset_truth(cfg, ds);
        let (dir, prefix) = match index {
            Some(_) => (out.to_path_buf(), String::new()),
            None => (out.join(format!("dataset_{k:02}")), format!("dataset_{k:02}/")),
        };
        let names = write_dataset(&dir, &ds.truth.complex, &ds.signals, Some(&truth))?;
        if index.is_none() {
            // each dataset directory carries its own manifest so it can be
            // trained on and replayed independently
            let sub = RunManifest {
                tool: tool(),
                command: Command::Generate {
                    config: cfg.clone(),
                    index: Some(k),
                },
                seed: Some(cfg.seed),
                inputs: vec![],
                input_hash: combined_hash(&[]),
                out: dir.clone(),
                outputs: names.clone(),
                dataset_split: Some(split),
                timings: BTreeMap::new(),
            };
            write_manifest(&sub)?;
        }
        outputs.extend(names.into_iter().map(|n| format!("{prefix}{n}")));
    }
    Ok(Run {
        inputs: vec![],
        outputs,
        split: index.map(|_| split),
        timings: BTreeMap::new(),
    })
}

fn hash_all(paths: &[PathBuf]) -> Result<Vec<InputFile>> {
    paths.iter().map(|p| hash_file(p)).collect()
}

fn remediation(e: Error) -> anyhow::Error {
    match e {
        Error::Infeasible { .. } => anyhow!(e).context("the spectral constraints admit no solution; raise --eps or --d"),
        e => anyhow!(e),
    }
}

fn train(dir: &Path, split: Split, cfg: &topodict::LearnConfig, out: &Path) -> Result<Run> {
    cfg.validate()?;
    let inputs = hash_all(&dataset::input_files(dir))?;
    let ds = read_dataset(dir, split)?;
    let r = learn(&ds.train(), &ds.complex, cfg).map_err(remediation)?;
    let model = ModelFile::new(&r.model, &ds.complex);
    write_text(&out.join(MODEL), &to_json(&model)?)?;
    let mut trace = String::from("iteration,outer,phase,objective,accepted\n");
    for e in &r.trace {
        let _ = writeln!(
            trace,
            "{},{},{},{},{}",
            e.iteration,
            e.outer,
            e.phase.name(),
            fmt_f64(e.objective),
            e.accepted
        );
    }
    write_text(&out.join(TRACE), &trace)?;
    let mut outputs = vec![MODEL.to_string(), TRACE.to_string()];
    if let Some(w) = &r.relaxed_p {
        write_text(&out.join("relaxed_p.csv"), &format!("{}\n", w.values().iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")))?;
        outputs.push("relaxed_p.csv".into());
    }
    let t = r.timings;
    let timings = BTreeMap::from([
        ("qp".to_string(), t.qp),
        ("sparse_coding".to_string(), t.sparse_coding),
        ("topology".to_string(), t.topology),
        ("learn".to_string(), t.total),
    ]);
    Ok(Run {
        inputs,
        outputs,
        split: None,
        timings,
    })
}

#[derive(Debug, Clone, Serialize)]
struct EvalRow {
    dataset: PathBuf,
    model: PathBuf,
    method: Method,
    k0: usize,
    nmse: f64,
    error_rate: Option<f64>,
    laplacian_nmse: Option<f64>,
    /// Test columns with zero norm, left out of the mean.
    excluded: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    mean: f64,
    std: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Aggregate {
    method: Method,
    k0: usize,
    runs: usize,
    nmse: Summary,
    error_rate: Option<Summary>,
    laplacian_nmse: Option<Summary>,
}

#[derive(Debug, Clone, Serialize)]
struct Results {
    aggregate: Vec<Aggregate>,
    runs: Vec<EvalRow>,
}

/// Mean and sample standard deviation (0 for a single value).
fn summarize(v: &[f64]) -> Summary {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary { mean, std }
}

fn evaluate_pair(pair: &crate::manifest::EvalPair, k0_sweep: &[usize], res_tol: f64) -> Result<Vec<EvalRow>> {
    let ds = read_dataset(&pair.dataset, pair.split)?;
    let file: ModelFile = topodict::io::read_json(&pair.model)?;
    let model = file.model()?;
    if file.edges != ds.complex.skeleton().edges() || file.polygons != ds.complex.polygons().vertex_sequences() {
        bail!("model {} was trained on a different complex than {}", pair.model.display(), pair.dataset.display());
    }
    let test = ds.test();
    // topology metrics need a planted truth and a binary estimate
    let (error_rate, lap) = match &ds.truth {
        Some(t) if model.p.is_binary() => {
            let p_true = t.selector()?;
            let rate = topology_error_rate(&p_true, &model.p)?;
            let l_true = ds.complex.upper_laplacian(&p_true)?;
            let l_hat = ds.complex.upper_laplacian(&model.p)?;
            (Some(rate), laplacian_nmse(&l_true, &l_hat).ok())
        }
        _ => (None, None),
    };
    k0_sweep
        .iter()
        .map(|&k0| {
            let (recon, _) = model.reconstruct(&ds.complex, &test, k0, res_tol)?;
            let e = nmse_detailed(&test, &recon)?;
            Ok(EvalRow {
                dataset: pair.dataset.clone(),
                model: pair.model.clone(),
                method: model.method,
                k0,
                nmse: e.nmse,
                error_rate,
                laplacian_nmse: lap,
                excluded: e.excluded,
            })
        })
        .collect()
}

fn aggregate(rows: &[EvalRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, usize), Vec<&EvalRow>> = BTreeMap::new();
    for r in rows {
        let m = Method::ALL.iter().position(|&m| m == r.method).unwrap_or(usize::MAX);
        groups.entry((m, r.k0)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let opt = |f: fn(&EvalRow) -> Option<f64>| {
                let v: Option<Vec<f64>> = g.iter().map(|r| f(r)).collect();
                v.map(|v| summarize(&v))
            };
            Aggregate {
                method: g[0].method,
                k0: g[0].k0,
                runs: g.len(),
                nmse: summarize(&g.iter().map(|r| r.nmse).collect::<Vec<_>>()),
                error_rate: opt(|r| r.error_rate),
                laplacian_nmse: opt(|r| r.laplacian_nmse),
            }
        })
        .collect()
}

fn evaluate(pairs: &[crate::manifest::EvalPair], k0_sweep: &[usize], res_tol: f64, out: &Path) -> Result<Run> {
    if pairs.is_empty() {
        bail!("nothing to evaluate: give at least one --dataset/--model pair");
    }
    if k0_sweep.is_empty() || k0_sweep.contains(&0) {
        bail!("k0 sweep must be non-empty and positive");
    }
    let mut paths = Vec::new();
    for p in pairs {
        paths.extend(dataset::input_files(&p.dataset));
        paths.push(p.model.clone());
    }
    let inputs = hash_all(&paths)?;
    let rows: Vec<EvalRow> = pairs
        .par_iter()
        .map(|p| evaluate_pair(p, k0_sweep, res_tol))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let agg = aggregate(&rows);
    let mut csv = String::from(
        "method,k0,runs,nmse_mean,nmse_std,error_rate_mean,error_rate_std,laplacian_nmse_mean,laplacian_nmse_std\n",
    );
    for a in &agg {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            a.method.name(),
            a.k0,
            a.runs,
            fmt_f64(a.nmse.mean),
            fmt_f64(a.nmse.std),
            fmt_opt(a.error_rate.as_ref().map(|s| s.mean)),
            fmt_opt(a.error_rate.as_ref().map(|s| s.std)),
            fmt_opt(a.laplacian_nmse.as_ref().map(|s| s.mean)),
            fmt_opt(a.laplacian_nmse.as_ref().map(|s| s.std)),
        );
    }
    write_text(&out.join(RESULTS_CSV), &csv)?;
    write_text(
        &out.join(RESULTS_JSON),
        &to_json(&Results {
            aggregate: agg,
            runs: rows,
        })?,
    )?;
    Ok(Run {
        inputs,
        outputs: vec![RESULTS_CSV.into(), RESULTS_JSON.into()],
        split: None,
        timings: BTreeMap::new(),
    })
}

fn ingest(
    signals: &Path,
    edges: &Path,
    polygons: Option<&Path>,
    n_train: usize,
    max_len: usize,
    out: &Path,
) -> Result<Run> {
    let mut paths = vec![signals.to_path_buf(), edges.to_path_buf()];
    paths.extend(polygons.map(Path::to_path_buf));
    let inputs = hash_all(&paths)?;
    let edge_list = parse_edge_list(&read_text(edges)?).with_context(|| format!("in {}", edges.display()))?;
    if edge_list.is_empty() {
        bail!("{} lists no edges", edges.display());
    }
    let nv = topodict::io::implied_vertices(&edge_list);
    let complex = match polygons {
        Some(path) => {
            let cycles = parse_polygons(&read_text(path)?).with_context(|| format!("in {}", path.display()))?;
            topodict::io::complex_from_lists(nv, &edge_list, &cycles)?
        }
        None => CellComplex2::from_edges(nv, &edge_list, max_len)?,
    };
    let y = parse_matrix_csv(&read_text(signals)?).with_context(|| format!("in {}", signals.display()))?;
    if y.nrows() != edge_list.len() {
        bail!(
            "{} has {} rows but {} lists {} edges",
            signals.display(),
            y.nrows(),
            edges.display(),
            edge_list.len()
        );
    }
    let y = dataset::canonical_rows(&complex, &edge_list, &y);
    if n_train == 0 || n_train >= y.ncols() {
        bail!("--split must lie in 1..{} for {} signals", y.ncols(), y.ncols());
    }
    let split = Split {
        t_train: n_train,
        t_test: y.ncols() - n_train,
    };
    // rewritten with canonical edge order and orientation
    let outputs = write_dataset(out, &complex, &y, None)?;
    Ok(Run {
        inputs,
        outputs,
        split: Some(split),
        timings: BTreeMap::new(),
    })
}
