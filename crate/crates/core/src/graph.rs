//! Compressed sparse row graphs, feature matrices, label sets and their
//! on-disk formats.
//!
//! Edge lists are whitespace separated `src dst [weight]` lines with 0-based
//! node ids. Blank lines and lines starting with `#` are skipped. Feature
//! and label files are plain comma separated values, one row per node.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dense::Matrix;
use crate::error::{Error, Result};

/// CSR matrix over `n` nodes.
///
/// Graphs loaded from edge lists are symmetric; semantic graphs produced by
/// row-wise top-k selection are not, so symmetry is a property that can be
/// checked rather than a type-level guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

/// How an edge list file maps onto matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeListMode {
    /// Each line is one undirected edge; stored in both directions.
    Undirected,
    /// Each line is exactly one stored entry `(src, dst)`.
    Directed,
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph { n, row_ptr: vec![0; n + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets. Entries are
    /// sorted by `(row, col)`; for duplicate coordinates the first
    /// occurrence wins. Self-loops are kept.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, f64)>) -> Result<Self> {
        if let Some(&(u, v, _)) = triplets.iter().find(|(u, v, _)| *u as usize >= n || *v as usize >= n) {
            return Err(Error::Input(format!("entry ({u}, {v}) out of range for {n} nodes")));
        }
        triplets.sort_by_key(|&(u, v, _)| (u, v));
        triplets.dedup_by_key(|&mut (u, v, _)| (u, v));
        let mut row_ptr = vec![0usize; n + 1];
        for &(u, _, _) in &triplets {
            row_ptr[u as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = triplets.iter().map(|t| t.1).collect();
        let values = triplets.iter().map(|t| t.2).collect();
        Ok(SparseGraph { n, row_ptr, col_idx, values })
    }

    /// Builds a symmetric graph from undirected edges. Self-loops are dropped
    /// and repeated edges collapse to a single one (first weight wins).
    pub fn from_undirected_edges(n: usize, edges: &[(u32, u32, f64)]) -> Result<Self> {
        let mut trip = Vec::with_capacity(edges.len() * 2);
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(u, v, w) in edges {
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if seen.insert(key) {
                trip.push((u, v, w));
                trip.push((v, u, w));
            }
        }
        SparseGraph::from_triplets(n, trip)
    }

    /// Builds directly from CSR arrays, validating structure.
    pub fn from_csr(n: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        let g = SparseGraph { n, row_ptr, col_idx, values };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if self.row_ptr.len() != self.n + 1 || self.row_ptr[0] != 0 {
            return bad("row_ptr must have n+1 entries starting at 0".into());
        }
        if *self.row_ptr.last().unwrap() != self.col_idx.len() || self.col_idx.len() != self.values.len() {
            return bad("row_ptr[n] must equal nnz".into());
        }
        for u in 0..self.n {
            if self.row_ptr[u] > self.row_ptr[u + 1] {
                return bad(format!("row_ptr decreases at row {u}"));
            }
            let cols = self.neighbors(u);
            if cols.iter().any(|&c| c as usize >= self.n) {
                return bad(format!("column index out of range in row {u}"));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {u} is not strictly sorted (duplicate entry?)"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    #[inline]
    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    #[inline]
    pub fn row_values(&self, u: usize) -> &[f64] {
        &self.values[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let cols = self.neighbors(u);
        cols.binary_search(&(v as u32)).ok().map(|i| self.row_values(u)[i])
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Iterates all stored entries `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .zip(self.row_values(u))
                .map(move |(&v, &w)| (u, v as usize, w))
        })
    }

    /// Undirected edges `u < v` of a symmetric graph.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries().filter(|&(u, v, _)| u < v)
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries().all(|(u, v, w)| self.get(v, u) == Some(w))
    }

    pub fn transpose(&self) -> SparseGraph {
        let mut counts = vec![0usize; self.n + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (u, v, w) in self.entries() {
            let slot = next[v];
            col_idx[slot] = u as u32;
            values[slot] = w;
            next[v] += 1;
        }
        SparseGraph { n: self.n, row_ptr, col_idx, values }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|u| self.row_values(u).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (_, v, w) in self.entries() {
            s[v] += w;
        }
        s
    }

    /// Same structure with every stored value replaced by `1.0`.
    pub fn binarized(&self) -> SparseGraph {
        SparseGraph { values: vec![1.0; self.nnz()], ..self.clone() }
    }

    /// Returns `self + I` (diagonal entries added or incremented by one).
    pub fn with_self_loops(&self) -> SparseGraph {
        let mut trip: Vec<(u32, u32, f64)> = Vec::with_capacity(self.nnz() + self.n);
        for u in 0..self.n {
            let mut diag_seen = false;
            for (&v, &w) in self.neighbors(u).iter().zip(self.row_values(u)) {
                if v as usize == u {
                    trip.push((u as u32, v, w + 1.0));
                    diag_seen = true;
                } else {
                    trip.push((u as u32, v, w));
                }
            }
            if !diag_seen {
                trip.push((u as u32, u as u32, 1.0));
            }
        }
        SparseGraph::from_triplets(self.n, trip).expect("indices already validated")
    }

    /// `self · x` for a dense right-hand side.
    pub fn spmm(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.n {
            return Err(Error::shape("spmm", format!("{0}x{0} sparse times {1:?}", self.n, x.shape())));
        }
        let d = x.cols();
        let mut out = Matrix::zeros(self.n, d);
        for u in 0..self.n {
            let orow = out.row_mut(u);
            for (&v, &w) in self.neighbors(u).iter().zip(self.row_values(u)) {
                for (o, &xv) in orow.iter_mut().zip(x.row(v as usize)) {
                    *o += w * xv;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (u, v, w) in self.entries() {
            m.set(u, v, w);
        }
        m
    }

    /// Writes the graph as an edge list. In [`EdgeListMode::Undirected`] mode
    /// only `u < v` entries are written (the graph must be symmetric).
    pub fn write_edge_list(&self, path: &Path, mode: EdgeListMode) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for (u, v, val) in self.entries() {
            if mode == EdgeListMode::Undirected && u >= v {
                continue;
            }
            writeln!(w, "{u} {v} {val}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Loads an undirected edge list over `n` nodes: symmetrized, deduplicated,
/// with self-loops dropped.
pub fn load_edge_list(path: &Path, n: usize) -> Result<SparseGraph> {
    load_edge_list_with_mode(path, n, EdgeListMode::Undirected)
}

pub fn load_edge_list_with_mode(path: &Path, n: usize, mode: EdgeListMode) -> Result<SparseGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, n, mode, &path.display().to_string())
}

/// Parses edge-list text. `source` is only used in error messages.
pub fn parse_edge_list(text: &str, n: usize, mode: EdgeListMode, source: &str) -> Result<SparseGraph> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |msg: String| Error::Parse { path: source.to_string(), line: lineno + 1, msg };
        let mut it = line.split_whitespace();
        let mut node = |name: &str| -> Result<u32> {
            let tok = it.next().ok_or_else(|| perr(format!("missing {name} node")))?;
            let id: u64 = tok.parse().map_err(|_| perr(format!("bad node id `{tok}`")))?;
            if id as usize >= n {
                return Err(Error::Input(format!(
                    "{source} line {}: node id {id} out of range for {n} nodes",
                    lineno + 1
                )));
            }
            Ok(id as u32)
        };
        let u = node("source")?;
        let v = node("target")?;
        let w = match it.next() {
            None => 1.0,
            Some(tok) => {
                let w: f64 = tok.parse().map_err(|_| perr(format!("bad weight `{tok}`")))?;
                if !w.is_finite() {
                    return Err(perr(format!("non-finite weight `{tok}`")));
                }
                w
            }
        };
        if it.next().is_some() {
            return Err(perr("too many fields".into()));
        }
        edges.push((u, v, w));
    }
    match mode {
        EdgeListMode::Undirected => SparseGraph::from_undirected_edges(n, &edges),
        EdgeListMode::Directed => SparseGraph::from_triplets(n, edges),
    }
}

/// `D_r^{-1/2} (A [+ I]) D_c^{-1/2}` with `D_r`, `D_c` the row and column
/// sums of the (optionally self-looped) matrix. For symmetric input both are
/// the ordinary degree. Non-positive degrees map to a zero scale factor, so
/// isolated nodes keep all-zero rows.
pub fn sym_normalized_adjacency(g: &SparseGraph, add_self_loops: bool) -> SparseGraph {
    let base = if add_self_loops { g.with_self_loops() } else { g.clone() };
    let inv_sqrt = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
    let dr: Vec<f64> = base.row_sums().into_iter().map(inv_sqrt).collect();
    let dc: Vec<f64> = base.col_sums().into_iter().map(inv_sqrt).collect();
    let mut out = base;
    for u in 0..out.n {
        let (start, end) = (out.row_ptr[u], out.row_ptr[u + 1]);
        for k in start..end {
            let v = out.col_idx[k] as usize;
            out.values[k] *= dr[u] * dc[v];
        }
    }
    out
}

/// Node features, `n` rows by `d_f` columns, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::Input("feature matrix contains non-finite values".into()));
        }
        Ok(FeatureMatrix(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text, &path.display().to_string())
}

pub fn parse_features(text: &str, source: &str) -> Result<FeatureMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { path: source.to_string(), line: lineno + 1, msg };
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                let v: f64 = tok.parse().map_err(|_| perr(format!("non-numeric cell `{tok}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(perr(format!("non-finite cell `{tok}`")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(perr(format!("ragged row: {} columns, expected {}", row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input(format!("{source}: feature file is empty")));
    }
    FeatureMatrix::new(Matrix::from_rows(&rows)?)
}

/// Writes any dense matrix as CSV using shortest round-trip float formatting.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for r in 0..m.rows() {
        let mut first = true;
        for v in m.row(r) {
            if !first {
                w.write_all(b",").map_err(io)?;
            }
            write!(w, "{v}").map_err(io)?;
            first = false;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-node class labels. Real datasets carry one label per node; the
/// synthetic overlapping-community graphs carry up to `om`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<Vec<u32>>,
    num_classes: usize,
}

impl LabelSet {
    pub fn new(mut labels: Vec<Vec<u32>>, num_classes: usize) -> Result<Self> {
        for (i, l) in labels.iter_mut().enumerate() {
            if l.is_empty() {
                return Err(Error::Input(format!("node {i} has no label")));
            }
            if let Some(&bad) = l.iter().find(|&&c| c as usize >= num_classes) {
                return Err(Error::Input(format!("node {i}: label {bad} >= {num_classes} classes")));
            }
            l.sort_unstable();
            l.dedup();
        }
        Ok(LabelSet { labels, num_classes })
    }

    pub fn single(labels: Vec<u32>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m as usize + 1);
        LabelSet::new(labels.into_iter().map(|l| vec![l]).collect(), k)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn of(&self, node: usize) -> &[u32] {
        &self.labels[node]
    }

    pub fn all(&self) -> &[Vec<u32>] {
        &self.labels
    }

    pub fn is_multilabel(&self) -> bool {
        self.labels.iter().any(|l| l.len() > 1)
    }

    /// First label of each node, for single-label evaluation.
    pub fn primary(&self) -> Vec<u32> {
        self.labels.iter().map(|l| l[0]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for l in &self.labels {
            let row: Vec<String> = l.iter().map(u32::to_string).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads labels: line `i` lists node `i`'s labels separated by commas.
/// The class count is one more than the largest label seen.
pub fn load_labels(path: &Path) -> Result<LabelSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<u32>().map_err(|_| Error::Parse {
                    path: source.clone(),
                    line: lineno + 1,
                    msg: format!("bad label `{}`", tok.trim()),
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        labels.push(row);
    }
    if labels.is_empty() {
        return Err(Error::Input(format!("{source}: label file is empty")));
    }
    let k = labels.iter().flatten().max().map_or(0, |&m| m as usize + 1);
    LabelSet::new(labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn parse(text: &str, n: usize) -> Result<SparseGraph> {
        parse_edge_list(text, n, EdgeListMode::Undirected, "test")
    }

    #[test]
    fn load_symmetrizes() {
        let g = parse("0 1\n1 2", 3).unwrap();
        assert_eq!(g.nnz(), 4);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0) && g.has_edge(1, 2) && g.has_edge(2, 1));
        assert!(g.is_symmetric());
    }

    #[test]
    fn load_drops_self_loops_and_duplicates() {
        assert_eq!(parse("0 0", 1).unwrap().nnz(), 0);
        assert_eq!(parse("0 1\n0 1", 2).unwrap().nnz(), 2);
        assert_eq!(parse("0 1\n1 0", 2).unwrap().nnz(), 2);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(parse("0 3", 3), Err(Error::Input(_))));
        match parse("0 1\n1 x", 3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse("0 1 2 3", 3), Err(Error::Parse { .. })));
    }

    #[test]
    fn features_parse_and_reject() {
        let f = parse_features("1,0\n0,1\n", "t").unwrap();
        assert_eq!(f.matrix(), &Matrix::identity(2));
        assert!(parse_features("", "t").is_err());
        assert!(parse_features("1,NaN\n", "t").is_err());
        assert!(parse_features("1,2\n3\n", "t").is_err());
        assert!(parse_features("1,a\n", "t").is_err());
    }

    #[test]
    fn normalization_examples() {
        let g = parse("0 1", 2).unwrap();
        let a = sym_normalized_adjacency(&g, false);
        assert_eq!(a.get(0, 1), Some(1.0));
        assert_eq!(a.get(1, 0), Some(1.0));

        // D̃ = diag(2, 2): every entry of the 2x2 block is 1/2.
        let a = sym_normalized_adjacency(&g, true);
        for u in 0..2 {
            for v in 0..2 {
                assert_abs_diff_eq!(a.get(u, v).unwrap(), 0.5, epsilon = 1e-15);
            }
        }

        let iso = SparseGraph::empty(1);
        assert_eq!(sym_normalized_adjacency(&iso, true).get(0, 0), Some(1.0));
        assert_eq!(sym_normalized_adjacency(&iso, false).nnz(), 0);
    }

    #[test]
    fn transpose_and_spmm() {
        let g = SparseGraph::from_triplets(3, vec![(0, 1, 2.0), (2, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let t = g.transpose();
        assert_eq!(t.get(1, 0), Some(2.0));
        assert_eq!(t.get(0, 2), Some(1.0));
        assert_eq!(t.transpose(), g);
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = g.spmm(&x).unwrap();
        assert_eq!(y.as_slice(), &[4.0, 6.0, 1.0]);
        assert_eq!(y, g.to_dense().matmul(&x).unwrap());
    }

    #[test]
    fn validate_rejects_unsorted_rows() {
        assert!(SparseGraph::from_csr(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseGraph::from_csr(2, vec![0, 1, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseGraph::from_csr(2, vec![0, 1, 1], vec![1], vec![1.0]).is_ok());
    }
}
