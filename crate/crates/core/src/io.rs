//! Text and JSON formats: edge lists, polygon lists, signal matrices, learned
//! models and planted truth.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complex::{CandidatePolygons, CellComplex2, PolygonSelector, Skeleton1};
use crate::dictionary::DictionaryParams;
use crate::error::{Error, Result};
use crate::learner::{Method, Model};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a vertex index, found {tok:?}"),
    })
}

/// One `u v` pair per line, 0-based. Blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, l) in data_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected two vertex indices, found {}", toks.len()),
            });
        }
        edges.push((parse_usize(toks[0], line)?, parse_usize(toks[1], line)?));
    }
    Ok(edges)
}

pub fn format_edge_list(edges: &[(usize, usize)]) -> String {
    edges.iter().fold(String::new(), |mut s, (a, b)| {
        let _ = writeln!(s, "{a} {b}");
        s
    })
}

/// One cycle per line as a whitespace-separated vertex sequence.
pub fn parse_polygons(text: &str) -> Result<Vec<Vec<usize>>> {
    data_lines(text)
        .map(|(line, l)| l.split_whitespace().map(|t| parse_usize(t, line)).collect())
        .collect()
}

pub fn format_polygons(cycles: &[Vec<usize>]) -> String {
    cycles.iter().fold(String::new(), |mut s, c| {
        let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", parts.join(" "));
        s
    })
}

/// Vertex count implied by an edge list (largest index + 1).
pub fn implied_vertices(edges: &[(usize, usize)]) -> usize {
    edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0)
}

/// Rebuilds a complex from its edge and polygon lists.
pub fn complex_from_lists(num_vertices: usize, edges: &[(usize, usize)], cycles: &[Vec<usize>]) -> Result<CellComplex2> {
    let sk = Skeleton1::new(num_vertices, edges)?;
    let polys = CandidatePolygons::from_cycles(&sk, cycles)?;
    CellComplex2::new(sk, polys)
}

/// Comma-separated matrix, one row per line.
pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::with_capacity(m.nrows() * m.ncols() * 20);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{:?}", m[(r, c)]);
        }
        s.push('\n');
    }
    s
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        let l = l.trim();
        if l.is_empty() {
            continue;
        }
        let row = l
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("not a number: {:?}", t.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(nr, nc, rows.into_iter().flatten()))
}

/// Serialized [`Model`] together with the complex it lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub method: Method,
    /// `J`.
    pub order: usize,
    /// `M`.
    pub blocks: usize,
    /// One `[h_id, h_u.., h_d..]` block per sub-dictionary; empty for Fourier.
    pub h: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub d: f64,
    pub eps: f64,
    pub num_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub polygons: Vec<Vec<usize>>,
}

impl ModelFile {
    pub fn new(model: &Model, complex: &CellComplex2) -> Self {
        Self {
            method: model.method,
            order: model.order,
            blocks: model.blocks,
            h: model.params.as_ref().map(|p| p.to_blocks()).unwrap_or_default(),
            p: model.p.values().to_vec(),
            d: model.d,
            eps: model.eps,
            num_vertices: complex.skeleton().num_vertices(),
            edges: complex.skeleton().edges().to_vec(),
            polygons: complex.polygons().vertex_sequences(),
        }
    }

    pub fn complex(&self) -> Result<CellComplex2> {
        complex_from_lists(self.num_vertices, &self.edges, &self.polygons)
    }

    pub fn model(&self) -> Result<Model> {
        let params = if self.h.is_empty() {
            None
        } else {
            if self.h.len() != self.blocks {
                return Err(Error::Dimension(format!("{} blocks listed, M = {}", self.h.len(), self.blocks)));
            }
            Some(DictionaryParams::from_blocks(self.order, &self.h)?)
        };
        let p = if self.p.iter().all(|&v| v == 0.0 || v == 1.0) {
            PolygonSelector::binary(self.p.clone())?
        } else {
            PolygonSelector::relaxed(self.p.clone())?
        };
        Ok(Model {
            method: self.method,
            order: self.order,
            blocks: self.blocks,
            params,
            p,
            d: self.d,
            eps: self.eps,
        })
    }
}

/// Planted ground truth of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub q_tr: f64,
    pub k0_gen: usize,
    pub order: usize,
    pub blocks: usize,
    pub h: Vec<Vec<f64>>,
    pub p: Vec<f64>,
}

impl TruthFile {
    pub fn params(&self) -> Result<DictionaryParams> {
        DictionaryParams::from_blocks(self.order, &self.h)
    }

    pub fn selector(&self) -> Result<PolygonSelector> {
        PolygonSelector::binary(self.p.clone())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn vector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}
