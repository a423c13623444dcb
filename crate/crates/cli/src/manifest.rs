//! Run manifests: everything needed to re-run a command and check that its
//! inputs have not changed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use topodict::{LearnConfig, SynthConfig};

pub const MANIFEST: &str = "manifest.json";

/// Column split of a dataset's signal matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub t_train: usize,
    pub t_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub split: Split,
}

/// A fully resolved command. Paths are absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Generate {
        config: SynthConfig,
        /// Single dataset written straight into the output directory.
        index: Option<usize>,
    },
    Train {
        dataset: PathBuf,
        split: Split,
        config: LearnConfig,
    },
    Evaluate {
        pairs: Vec<EvalPair>,
        k0_sweep: Vec<usize>,
        res_tol: f64,
    },
    Ingest {
        signals: PathBuf,
        edges: PathBuf,
        polygons: Option<PathBuf>,
        n_train: usize,
        max_len: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Generate { .. } => "generate",
            Self::Train { .. } => "train",
            Self::Evaluate { .. } => "evaluate",
            Self::Ingest { .. } => "ingest",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Generate { config, .. } => Some(config.seed),
            Self::Train { config, .. } => Some(config.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    #[serde(flatten)]
    pub command: Command,
    pub seed: Option<u64>,
    pub inputs: Vec<InputFile>,
    /// Hash over the input hashes, in order.
    pub input_hash: String,
    pub out: PathBuf,
    /// Files written, relative to `out`. Manifests are not listed.
    pub outputs: Vec<String>,
    /// Present when `out` is a dataset directory.
    pub dataset_split: Option<Split>,
    /// Wall-clock seconds. The only field that differs between re-runs.
    pub timings: BTreeMap<String, f64>,
}

/// Git-style object hash: sha256 over `blob <len>\0<content>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> Result<InputFile> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputFile {
        path: path.to_path_buf(),
        hash: content_hash(&bytes),
    })
}

pub fn combined_hash(inputs: &[InputFile]) -> String {
    let mut h = Sha256::new();
    for f in inputs {
        h.update(f.hash.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Fails if any recorded input is missing or has changed.
pub fn verify_inputs(m: &RunManifest) -> Result<()> {
    for f in &m.inputs {
        let now = hash_file(&f.path)?;
        if now.hash != f.hash {
            bail!("input {} changed since the run (hash {}, recorded {})", f.path.display(), now.hash, f.hash);
        }
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

pub fn write_manifest(m: &RunManifest) -> Result<()> {
    let path = m.out.join(MANIFEST);
    std::fs::write(&path, topodict::io::to_json(m)?).with_context(|| format!("writing {}", path.display()))
}
