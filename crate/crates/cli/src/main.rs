//! `topodict`: generate synthetic suites, ingest edge-signal data, train
//! dictionaries and evaluate them. Every command writes a `manifest.json`
//! from which `topodict replay` reproduces its outputs byte for byte.

mod commands;
mod dataset;
mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use topodict::{LearnConfig, Method, SynthConfig};

use crate::manifest::{read_manifest, verify_inputs, Command, EvalPair, RunManifest, MANIFEST};

#[derive(Parser)]
#[command(name = "topodict", version, about = "Topological dictionary learning on cell complexes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic suite: one directory per dataset.
    Generate(GenerateArgs),
    /// Train a dictionary (and topology) on a dataset's training split.
    Train(TrainArgs),
    /// Test NMSE per K0, plus topology metrics when truth is available.
    Evaluate(EvaluateArgs),
    /// Turn an edge-signal CSV and an edge list into a dataset directory.
    Ingest(IngestArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// SynthConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "q-tr")]
    q_tr: Option<f64>,
    /// Nonzeros per generated signal.
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    /// gtdl, rtdl, fourier, edge, joint or separated.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// LearnConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    imax: Option<usize>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value = "model")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset directory; pairs with the `--model` at the same position.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Model JSON or a train output directory.
    #[arg(long, required = true)]
    model: Vec<PathBuf>,
    #[arg(long, conflicts_with = "k0_sweep")]
    k0: Option<usize>,
    #[arg(long = "k0-sweep", value_delimiter = ',')]
    k0_sweep: Vec<usize>,
    /// OMP stopping tolerance relative to each signal's norm.
    #[arg(long, default_value_t = 1e-12)]
    res_tol: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Edge signals: one row per edge, one column per sample.
    signals: PathBuf,
    /// `u v` per line, in the row order of the signals.
    edges: PathBuf,
    /// Number of leading columns used for training; the rest test.
    #[arg(long)]
    split: usize,
    /// Candidate polygons, one vertex cycle per line. Default: every induced
    /// cycle up to `--max-len`.
    #[arg(long)]
    polygons: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    max_len: usize,
    #[arg(long, default_value = "dataset")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// A manifest file or the directory holding one.
    manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method {s:?} (gtdl, rtdl, fourier, edge, joint, separated)"))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    p.canonicalize().with_context(|| format!("{} not found", p.display()))
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

fn generate_command(a: &GenerateArgs) -> Result<Command> {
    let mut cfg: SynthConfig = read_config(a.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.q_tr {
        cfg.q_tr = v;
    }
    if let Some(v) = a.k0 {
        cfg.k0_gen = v;
    }
    cfg.validate()?;
    Ok(Command::Generate { config: cfg, index: None })
}

fn train_command(a: &TrainArgs) -> Result<Command> {
    let mut cfg: LearnConfig = read_config(a.config.as_deref())?;
    if let Some(v) = a.method {
        cfg.method = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.k0 {
        cfg.k0 = v;
    }
    if let Some(v) = a.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if a.mu.is_some() {
        cfg.mu = a.mu;
    }
    if let Some(v) = a.imax {
        cfg.i_max = v;
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let Some(v) = a.eps {
        cfg.eps = v;
    }
    if let Some(v) = a.restarts {
        cfg.restarts = v;
    }
    cfg.validate()?;
    let dataset = absolute(&a.dataset)?;
    let split = dataset::read_split(&dataset)?;
    Ok(Command::Train {
        dataset,
        split,
        config: cfg,
    })
}

fn evaluate_command(a: &EvaluateArgs) -> Result<Command> {
    if a.dataset.len() != a.model.len() {
        bail!("{} --dataset values but {} --model values; they pair up by position", a.dataset.len(), a.model.len());
    }
    let pairs = a
        .dataset
        .iter()
        .zip(&a.model)
        .map(|(d, m)| {
            let dataset = absolute(d)?;
            let mut model = absolute(m)?;
            if model.is_dir() {
                model = model.join(commands::MODEL);
            }
            Ok(EvalPair {
                split: dataset::read_split(&dataset)?,
                dataset,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k0_sweep = match (a.k0, a.k0_sweep.is_empty()) {
        (Some(k), _) => vec![k],
        (None, false) => a.k0_sweep.clone(),
        (None, true) => vec![LearnConfig::default().k0],
    };
    Ok(Command::Evaluate {
        pairs,
        k0_sweep,
        res_tol: a.res_tol,
    })
}

fn ingest_command(a: &IngestArgs) -> Result<Command> {
    Ok(Command::Ingest {
        signals: absolute(&a.signals)?,
        edges: absolute(&a.edges)?,
        polygons: a.polygons.as_deref().map(absolute).transpose()?,
        n_train: a.split,
        max_len: a.max_len,
    })
}

fn replay(a: &ReplayArgs) -> Result<RunManifest> {
    let path = if a.manifest.is_dir() {
        a.manifest.join(MANIFEST)
    } else {
        a.manifest.clone()
    };
    let m = read_manifest(&path)?;
    verify_inputs(&m)?;
    commands::run(&m.command, a.out.as_deref().unwrap_or(&m.out))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HODGE_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("HODGE_THREADS={v:?} is not a thread count"))?;
        if n == 0 {
            bail!("HODGE_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    configure_threads()?;
    let m = match &cli.command {
        Cmd::Generate(a) => commands::run(&generate_command(a)?, &a.out)?,
        Cmd::Train(a) => commands::run(&train_command(a)?, &a.out)?,
        Cmd::Evaluate(a) => commands::run(&evaluate_command(a)?, &a.out)?,
        Cmd::Ingest(a) => commands::run(&ingest_command(a)?, &a.out)?,
        Cmd::Replay(a) => replay(a)?,
    };
    println!("{}: wrote {} files to {}", m.command.name(), m.outputs.len(), m.out.display());
    Ok(())
}
