//! Oriented second-order cell complexes.
//!
//! A complex is built from a 1-skeleton (vertices and edges) plus a set of
//! candidate polygons attached to cycles of that skeleton. Edges carry the
//! reference orientation `low -> high` vertex. Polygons are traversed starting
//! at their smallest vertex and heading toward the smaller of its two cycle
//! neighbours, so every fixture has a single deterministic orientation.
//!
//! The incidence matrices `B1` (vertices x edges) and `B2` (edges x polygons)
//! are stored densely over the integers; `B1 * B2 = 0` is checked exactly at
//! construction time.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Graph underlying a cell complex, with canonically oriented edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton1 {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
}

impl Skeleton1 {
    /// Builds a skeleton from an unordered list of vertex pairs.
    ///
    /// Pairs are reoriented to `(min, max)` and sorted lexicographically, which
    /// fixes the edge indexing.
    pub fn new(num_vertices: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(a, b) in edge_list {
            for v in [a, b] {
                if v >= num_vertices {
                    return Err(Error::VertexOutOfRange {
                        vertex: v,
                        num_vertices,
                    });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::DuplicateEdge(a, b));
            }
        }
        let edges: Vec<(usize, usize)> = seen.into_iter().collect();
        let index = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Ok(Self {
            num_vertices,
            edges,
            index,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Index of the edge joining `a` and `b`, in either order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.index.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_index(a, b).is_some()
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vertices];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for nb in &mut adj {
            nb.sort_unstable();
        }
        adj
    }

    /// Number of connected components (isolated vertices count).
    pub fn num_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_vertices];
        let mut count = 0;
        for start in 0..self.num_vertices {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }
}

/// An oriented closed edge walk together with its signed edge incidences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polygon {
    /// Cyclic vertex sequence in traversal order.
    pub vertices: Vec<usize>,
    /// `(edge index, +1 | -1)` for each traversed edge, in traversal order.
    pub incidences: Vec<(usize, i32)>,
}

/// Rotates and possibly reverses a cycle so that it starts at its minimal
/// vertex and continues toward the smaller of that vertex's two neighbours.
pub fn canonical_cycle(cycle: &[usize]) -> Vec<usize> {
    let n = cycle.len();
    if n == 0 {
        return Vec::new();
    }
    let start = (0..n).min_by_key(|&i| cycle[i]).unwrap();
    let next = cycle[(start + 1) % n];
    let prev = cycle[(start + n - 1) % n];
    if next <= prev {
        (0..n).map(|k| cycle[(start + k) % n]).collect()
    } else {
        (0..n).map(|k| cycle[(start + n - k) % n]).collect()
    }
}

/// The candidate set of 2-cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidatePolygons {
    cycles: Vec<Polygon>,
}

impl CandidatePolygons {
    /// Validates user-supplied cycles against `sk`, canonicalizes their
    /// orientation and drops duplicates (up to rotation and reflection).
    pub fn from_cycles(sk: &Skeleton1, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(cycles.len());
        for (index, cycle) in cycles.iter().enumerate() {
            if cycle.len() < 3 {
                return Err(Error::InvalidPolygon {
                    index,
                    reason: format!("length {} < 3", cycle.len()),
                });
            }
            let distinct: BTreeSet<_> = cycle.iter().collect();
            if distinct.len() != cycle.len() {
                return Err(Error::InvalidPolygon {
                    index,
                    reason: "repeated vertex".into(),
                });
            }
            let canon = canonical_cycle(cycle);
            if !seen.insert(canon.clone()) {
                continue;
            }
            let poly = Self::orient(sk, canon).map_err(|reason| Error::InvalidPolygon { index, reason })?;
            out.push(poly);
        }
        Ok(Self { cycles: out })
    }

    fn orient(sk: &Skeleton1, vertices: Vec<usize>) -> std::result::Result<Polygon, String> {
        let n = vertices.len();
        let mut incidences = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (vertices[k], vertices[(k + 1) % n]);
            let e = sk
                .edge_index(a, b)
                .ok_or_else(|| format!("missing edge ({a}, {b})"))?;
            incidences.push((e, if a < b { 1 } else { -1 }));
        }
        Ok(Polygon {
            vertices,
            incidences,
        })
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn cycles(&self) -> &[Polygon] {
        &self.cycles
    }

    pub fn vertex_sequences(&self) -> Vec<Vec<usize>> {
        self.cycles.iter().map(|c| c.vertices.clone()).collect()
    }
}

/// Enumerates candidate polygons of `sk`.
///
/// With `max_len = 3` this is the set of triangles, each listed once in
/// ascending vertex order. Larger bounds add every induced (chordless) cycle
/// of length up to `max_len`. Output is sorted by length, then by vertex
/// sequence.
pub fn enumerate_polygons(sk: &Skeleton1, max_len: usize) -> Result<CandidatePolygons> {
    if max_len < 3 {
        return Err(Error::Parameter(format!("max_len must be >= 3, got {max_len}")));
    }
    let adj = sk.adjacency();
    let mut found: Vec<Vec<usize>> = Vec::new();

    if max_len == 3 {
        for &(a, b) in sk.edges() {
            for &c in &adj[b] {
                if c > b && sk.has_edge(a, c) {
                    found.push(vec![a, b, c]);
                }
            }
        }
    } else {
        for s in 0..sk.num_vertices() {
            let mut path = vec![s];
            let mut on_path = vec![false; sk.num_vertices()];
            on_path[s] = true;
            extend_induced(sk, &adj, s, max_len, &mut path, &mut on_path, &mut found);
        }
    }

    found.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    let cycles = found
        .into_iter()
        .map(|v| CandidatePolygons::orient(sk, v).expect("enumerated cycles use skeleton edges"))
        .collect();
    Ok(CandidatePolygons { cycles })
}

// DFS over chordless paths whose vertices are all larger than the start `s`.
fn extend_induced(
    sk: &Skeleton1,
    adj: &[Vec<usize>],
    s: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut Vec<Vec<usize>>,
) {
    let last = *path.last().unwrap();
    for &w in &adj[last] {
        if w <= s || on_path[w] {
            continue;
        }
        // w may only touch `last` and (when closing) `s`
        let interior = if path.len() > 2 { &path[1..path.len() - 1] } else { &[][..] };
        let chord = interior.iter().any(|&v| sk.has_edge(v, w));
        if chord {
            continue;
        }
        let closes = path.len() >= 2 && sk.has_edge(w, s);
        if closes {
            if path[1] < w {
                let mut cycle = path.clone();
                cycle.push(w);
                found.push(cycle);
            }
            continue;
        }
        if path.len() + 1 < max_len {
            path.push(w);
            on_path[w] = true;
            extend_induced(sk, adj, s, max_len, path, on_path, found);
            on_path[w] = false;
            path.pop();
        }
    }
}

/// A second-order cell complex with its integer incidence matrices.
#[derive(Debug, Clone)]
pub struct CellComplex2 {
    skeleton: Skeleton1,
    polygons: CandidatePolygons,
    b1: DMatrix<i32>,
    b2: DMatrix<i32>,
}

impl CellComplex2 {
    /// Builds `B1`, `B2` and checks `B1 * B2 = 0` in exact integer arithmetic.
    pub fn new(skeleton: Skeleton1, polygons: CandidatePolygons) -> Result<Self> {
        let n0 = skeleton.num_vertices();
        let n1 = skeleton.num_edges();
        let n2 = polygons.len();

        let mut b1 = DMatrix::<i32>::zeros(n0, n1);
        for (e, &(tail, head)) in skeleton.edges().iter().enumerate() {
            b1[(tail, e)] = -1;
            b1[(head, e)] = 1;
        }

        let mut b2 = DMatrix::<i32>::zeros(n1, n2);
        for (c, poly) in polygons.cycles().iter().enumerate() {
            for &(e, sign) in &poly.incidences {
                b2[(e, c)] = sign;
            }
        }

        let prod = &b1 * &b2;
        if let Some((k, _)) = prod.iter().enumerate().find(|(_, &v)| v != 0) {
            return Err(Error::BoundaryNotClosed {
                row: k % n0,
                col: k / n0,
            });
        }

        Ok(Self {
            skeleton,
            polygons,
            b1,
            b2,
        })
    }

    /// Convenience: skeleton from an edge list, candidates = induced cycles up to `max_len`.
    pub fn from_edges(num_vertices: usize, edges: &[(usize, usize)], max_len: usize) -> Result<Self> {
        let sk = Skeleton1::new(num_vertices, edges)?;
        let polys = enumerate_polygons(&sk, max_len)?;
        Self::new(sk, polys)
    }

    pub fn skeleton(&self) -> &Skeleton1 {
        &self.skeleton
    }

    pub fn polygons(&self) -> &CandidatePolygons {
        &self.polygons
    }

    pub fn b1(&self) -> &DMatrix<i32> {
        &self.b1
    }

    pub fn b2(&self) -> &DMatrix<i32> {
        &self.b2
    }

    pub fn num_edges(&self) -> usize {
        self.skeleton.num_edges()
    }

    pub fn num_polygons(&self) -> usize {
        self.polygons.len()
    }

    pub fn b1_f64(&self) -> DMatrix<f64> {
        self.b1.map(f64::from)
    }

    pub fn b2_f64(&self) -> DMatrix<f64> {
        self.b2.map(f64::from)
    }

    /// Column `j` of `B2` as a real vector.
    pub fn polygon_boundary(&self, j: usize) -> DVector<f64> {
        self.b2.column(j).map(f64::from)
    }

    /// `B1^T B1`.
    pub fn lower_laplacian(&self) -> DMatrix<f64> {
        let b1 = self.b1_f64();
        b1.transpose() * b1
    }

    /// `B2 diag(p) B2^T`.
    pub fn upper_laplacian(&self, p: &PolygonSelector) -> Result<DMatrix<f64>> {
        self.weighted_upper_laplacian(p.values())
    }

    /// `B2 diag(w) B2^T` for arbitrary real weights (no range check).
    pub fn weighted_upper_laplacian(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        if w.len() != self.num_polygons() {
            return Err(Error::Dimension(format!(
                "selector has {} entries, complex has {} polygons",
                w.len(),
                self.num_polygons()
            )));
        }
        let n1 = self.num_edges();
        let mut lu = DMatrix::zeros(n1, n1);
        for (poly, &wj) in self.polygons.cycles().iter().zip(w) {
            if wj == 0.0 {
                continue;
            }
            for &(a, sa) in &poly.incidences {
                for &(b, sb) in &poly.incidences {
                    lu[(a, b)] += wj * f64::from(sa * sb);
                }
            }
        }
        Ok(lu)
    }

    /// Lower and upper Hodge Laplacians of the edge space at selector `p`.
    pub fn hodge_pair(&self, p: &PolygonSelector) -> Result<HodgePair> {
        Ok(HodgePair {
            l_down: self.lower_laplacian(),
            l_up: self.upper_laplacian(p)?,
            p: p.clone(),
        })
    }

    /// First Betti number of the subcomplex selected by binary `p`, computed
    /// from ranks: `N1 - rank(B1) - rank(B2 diag(p))`.
    pub fn betti1(&self, p: &PolygonSelector) -> usize {
        let b1 = self.b1_f64();
        let b2p = self.selected_b2(p);
        self.num_edges() - linalg::rank(&b1, 1e-8) - linalg::rank(&b2p, 1e-8)
    }

    fn selected_b2(&self, p: &PolygonSelector) -> DMatrix<f64> {
        let mut m = self.b2_f64();
        for (j, &w) in p.values().iter().enumerate() {
            if w == 0.0 {
                m.column_mut(j).fill(0.0);
            }
        }
        m
    }

    /// Splits an edge signal into its irrotational (`im B1^T`), solenoidal
    /// (`im B2(p)`) and harmonic parts.
    pub fn hodge_decompose(&self, y: &DVector<f64>, p: &PolygonSelector) -> Result<HodgeDecomposition> {
        if y.len() != self.num_edges() {
            return Err(Error::Dimension(format!(
                "signal has length {}, complex has {} edges",
                y.len(),
                self.num_edges()
            )));
        }
        if p.len() != self.num_polygons() {
            return Err(Error::Dimension("selector length".into()));
        }
        let grad_basis = linalg::column_space(&self.b1_f64().transpose(), 1e-8);
        let curl_basis = linalg::column_space(&self.selected_b2(p), 1e-8);
        let irrotational = linalg::project(&grad_basis, y);
        let solenoidal = linalg::project(&curl_basis, y);
        let harmonic = y - &irrotational - &solenoidal;
        Ok(HodgeDecomposition {
            irrotational,
            solenoidal,
            harmonic,
        })
    }
}

#[derive(Debug, Clone)]
pub struct HodgeDecomposition {
    pub irrotational: DVector<f64>,
    pub solenoidal: DVector<f64>,
    pub harmonic: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorMode {
    Binary,
    Relaxed,
}

/// Polygon activation weights parametrizing the upper Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSelector {
    values: Vec<f64>,
    mode: SelectorMode,
}

impl PolygonSelector {
    pub fn ones(n: usize) -> Self {
        Self {
            values: vec![1.0; n],
            mode: SelectorMode::Binary,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            mode: SelectorMode::Binary,
        }
    }

    pub fn from_active(active: &[bool]) -> Self {
        Self {
            values: active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect(),
            mode: SelectorMode::Binary,
        }
    }

    pub fn binary(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parameter(format!("binary selector entry {v} not in {{0, 1}}")));
        }
        Ok(Self {
            values,
            mode: SelectorMode::Binary,
        })
    }

    pub fn relaxed(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Parameter(format!("relaxed selector entry {v} not in [0, 1]")));
        }
        Ok(Self {
            values,
            mode: SelectorMode::Relaxed,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mode(&self) -> SelectorMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Thresholds at 0.5.
    pub fn binarize(&self) -> Self {
        Self {
            values: self.values.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect(),
            mode: SelectorMode::Binary,
        }
    }

    pub fn active(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0.0).collect()
    }

    pub fn num_active(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// Copy with entry `j` set to zero.
    pub fn without(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.values[j] = 0.0;
        out
    }
}

/// Lower and upper edge Laplacians for one polygon selection.
#[derive(Debug, Clone)]
pub struct HodgePair {
    pub l_down: DMatrix<f64>,
    pub l_up: DMatrix<f64>,
    pub p: PolygonSelector,
}

impl HodgePair {
    pub fn dim(&self) -> usize {
        self.l_down.nrows()
    }

    /// Full Hodge Laplacian `L_down + L_up`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        &self.l_down + &self.l_up
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> CellComplex2 {
        CellComplex2::from_edges(3, &[(0, 1), (0, 2), (1, 2)], 3).unwrap()
    }

    #[test]
    fn skeleton_orders_and_orients_edges() {
        let sk = Skeleton1::new(3, &[(2, 1), (0, 2), (0, 1)]).unwrap();
        assert_eq!(sk.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(sk.edge_index(2, 1), Some(2));
    }

    #[test]
    fn skeleton_rejects_bad_input() {
        assert!(matches!(Skeleton1::new(3, &[(2, 2)]), Err(Error::SelfLoop(2))));
        assert!(matches!(
            Skeleton1::new(3, &[(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge(1, 0))
        ));
        assert!(matches!(
            Skeleton1::new(3, &[(0, 3)]),
            Err(Error::VertexOutOfRange { vertex: 3, .. })
        ));
    }

    #[test]
    fn triangle_incidence() {
        let c = triangle();
        assert_eq!(c.polygons().cycles()[0].vertices, vec![0, 1, 2]);
        assert_eq!(c.b2().column(0).iter().copied().collect::<Vec<_>>(), vec![1, -1, 1]);
        let ld = c.lower_laplacian();
        let expect = DMatrix::from_row_slice(3, 3, &[2., 1., -1., 1., 2., 1., -1., 1., 2.]);
        assert_eq!(ld, expect);
        for col in c.b1().column_iter() {
            assert_eq!(col.iter().sum::<i32>(), 0);
        }
    }

    #[test]
    fn triangle_upper_laplacian() {
        let c = triangle();
        let hp = c.hodge_pair(&PolygonSelector::ones(1)).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1., -1., 1., -1., 1., -1., 1., -1., 1.]);
        assert_eq!(hp.l_up, expect);
        assert!(linalg::max_abs(&(&hp.l_down * &hp.l_up)) < 1e-12);
        let hp0 = c.hodge_pair(&PolygonSelector::zeros(1)).unwrap();
        assert_eq!(hp0.l_up, DMatrix::zeros(3, 3));
    }

    #[test]
    fn selector_length_checked() {
        let c = triangle();
        assert!(matches!(
            c.hodge_pair(&PolygonSelector::ones(2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn path_has_no_polygons() {
        let sk = Skeleton1::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(enumerate_polygons(&sk, 3).unwrap().is_empty());
        assert!(enumerate_polygons(&sk, 6).unwrap().is_empty());
    }

    #[test]
    fn square_with_diagonal_induced_cycles() {
        // 0-1-2-3-0 with chord 0-2: the 4-cycle is not induced
        let sk = Skeleton1::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let polys = enumerate_polygons(&sk, 4).unwrap();
        assert_eq!(polys.vertex_sequences(), vec![vec![0, 1, 2], vec![0, 2, 3]]);
        let sk = Skeleton1::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let polys = enumerate_polygons(&sk, 4).unwrap();
        assert_eq!(polys.vertex_sequences(), vec![vec![0, 1, 2, 3]]);
        assert!(enumerate_polygons(&sk, 3).unwrap().is_empty());
    }

    #[test]
    fn max_len_below_three_rejected() {
        let sk = Skeleton1::new(2, &[(0, 1)]).unwrap();
        assert!(enumerate_polygons(&sk, 2).is_err());
    }

    #[test]
    fn user_cycles_are_canonicalized_and_deduplicated() {
        let sk = Skeleton1::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let polys = CandidatePolygons::from_cycles(&sk, &[vec![2, 1, 0, 3], vec![3, 0, 1, 2]]).unwrap();
        assert_eq!(polys.vertex_sequences(), vec![vec![0, 1, 2, 3]]);
        assert!(CandidatePolygons::from_cycles(&sk, &[vec![0, 1, 3]]).is_err());
        assert!(CandidatePolygons::from_cycles(&sk, &[vec![0, 1]]).is_err());
    }

    #[test]
    fn decomposition_of_curl_signal() {
        let c = triangle();
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        let dec = c.hodge_decompose(&y, &PolygonSelector::ones(1)).unwrap();
        assert!(dec.irrotational.norm() < 1e-12);
        assert!(dec.harmonic.norm() < 1e-12);
        assert!((dec.solenoidal - y).norm() < 1e-12);
    }

    #[test]
    fn decomposition_of_gradient_signal() {
        let c = triangle();
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let y = c.b1_f64().transpose() * x;
        let dec = c.hodge_decompose(&y, &PolygonSelector::ones(1)).unwrap();
        assert!(dec.solenoidal.norm() < 1e-12);
        assert!(dec.harmonic.norm() < 1e-12);
    }

    #[test]
    fn hollow_triangle_has_one_hole() {
        let c = triangle();
        assert_eq!(c.betti1(&PolygonSelector::zeros(1)), 1);
        assert_eq!(c.betti1(&PolygonSelector::ones(1)), 0);
    }
}
