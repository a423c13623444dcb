//! Dataset directory layout:
//! `signals.csv`, `edges.txt`, `polygons.txt`, optional `truth.json` and
//! `manifest.json` (which records the train/test split).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use topodict::io::{
    complex_from_lists, format_edge_list, format_matrix_csv, format_polygons, implied_vertices, parse_edge_list,
    parse_matrix_csv, parse_polygons, to_json, TruthFile,
};
use topodict::CellComplex2;

use crate::manifest::{read_manifest, Split, MANIFEST};

pub const SIGNALS: &str = "signals.csv";
pub const EDGES: &str = "edges.txt";
pub const POLYGONS: &str = "polygons.txt";
pub const TRUTH: &str = "truth.json";

pub struct Dataset {
    pub complex: CellComplex2,
    pub signals: DMatrix<f64>,
    pub split: Split,
    pub truth: Option<TruthFile>,
}

impl Dataset {
    pub fn train(&self) -> DMatrix<f64> {
        self.signals.columns(0, self.split.t_train).into_owned()
    }

    pub fn test(&self) -> DMatrix<f64> {
        self.signals.columns(self.split.t_train, self.split.t_test).into_owned()
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Split recorded in the dataset's manifest.
pub fn read_split(dir: &Path) -> Result<Split> {
    let m = read_manifest(&dir.join(MANIFEST))?;
    m.dataset_split
        .with_context(|| format!("{} does not describe a dataset (no split)", dir.join(MANIFEST).display()))
}

/// Files a command reading this dataset depends on.
pub fn input_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = [SIGNALS, EDGES, POLYGONS].iter().map(|f| dir.join(f)).collect();
    if dir.join(TRUTH).exists() {
        v.push(dir.join(TRUTH));
    }
    v
}

pub fn read_dataset(dir: &Path, split: Split) -> Result<Dataset> {
    let edges = parse_edge_list(&read_text(&dir.join(EDGES))?).with_context(|| format!("in {}", dir.join(EDGES).display()))?;
    let polys =
        parse_polygons(&read_text(&dir.join(POLYGONS))?).with_context(|| format!("in {}", dir.join(POLYGONS).display()))?;
    let complex = complex_from_lists(implied_vertices(&edges), &edges, &polys)?;
    let raw =
        parse_matrix_csv(&read_text(&dir.join(SIGNALS))?).with_context(|| format!("in {}", dir.join(SIGNALS).display()))?;
    if raw.nrows() != edges.len() {
        bail!("{} has {} rows but the edge list has {} edges", SIGNALS, raw.nrows(), edges.len());
    }
    let signals = canonical_rows(&complex, &edges, &raw);
    if split.t_train + split.t_test > signals.ncols() {
        bail!(
            "split {} + {} exceeds the {} signals in {}",
            split.t_train,
            split.t_test,
            signals.ncols(),
            dir.display()
        );
    }
    let truth = if dir.join(TRUTH).exists() {
        Some(topodict::io::read_json(&dir.join(TRUTH))?)
    } else {
        None
    };
    Ok(Dataset {
        complex,
        signals,
        split,
        truth,
    })
}

/// Reorders signal rows from the listed edge order into the complex's
/// canonical `(min, max)` order, flipping the sign of reversed edges.
pub fn canonical_rows(complex: &CellComplex2, listed: &[(usize, usize)], y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for (row, &(a, b)) in listed.iter().enumerate() {
        let e = complex.skeleton().edge_index(a, b).expect("edge list built the skeleton");
        let sign = if a < b { 1.0 } else { -1.0 };
        out.row_mut(e).copy_from(&(y.row(row) * sign));
    }
    out
}

/// Writes the data files and returns their names.
pub fn write_dataset(
    dir: &Path,
    complex: &CellComplex2,
    signals: &DMatrix<f64>,
    truth: Option<&TruthFile>,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join(SIGNALS), &format_matrix_csv(signals))?;
    write_text(&dir.join(EDGES), &format_edge_list(complex.skeleton().edges()))?;
    write_text(&dir.join(POLYGONS), &format_polygons(&complex.polygons().vertex_sequences()))?;
    let mut names = vec![SIGNALS.to_string(), EDGES.to_string(), POLYGONS.to_string()];
    if let Some(t) = truth {
        write_text(&dir.join(TRUTH), &to_json(t)?)?;
        names.push(TRUTH.to_string());
    }
    Ok(names)
}
