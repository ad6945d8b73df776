//! Semantic graphs: feature cosine similarity restricted to motif
//! co-occurrence support, sparsified to the top-k entries per row.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::dense::dot;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, SparseGraph};
use crate::motif::{cooccurrence, enumerate_instances, nonzero_mask, MotifPattern};

/// One semantic graph per motif, all over the same node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraphSet {
    pub graphs: Vec<SparseGraph>,
    pub k: usize,
    pub motif_names: Vec<String>,
    /// Instance count per motif, in the same order as `graphs`.
    pub instance_counts: Vec<usize>,
}

impl SemanticGraphSet {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

fn row_norms(x: &FeatureMatrix) -> Vec<f64> {
    let m = x.matrix();
    (0..m.rows()).map(|i| dot(m.row(i), m.row(i)).sqrt()).collect()
}

#[inline]
fn cosine(x: &FeatureMatrix, norms: &[f64], u: usize, v: usize) -> f64 {
    let denom = norms[u] * norms[v];
    if denom == 0.0 {
        0.0
    } else {
        (dot(x.matrix().row(u), x.matrix().row(v)) / denom).clamp(-1.0, 1.0)
    }
}

/// Cosine similarity of feature rows evaluated only on the support of
/// `mask`. Zero-norm rows have cosine 0. Entries whose cosine is exactly
/// zero are not stored.
pub fn masked_cosine(x: &FeatureMatrix, mask: &SparseGraph) -> Result<SparseGraph> {
    if mask.n() != x.n() {
        return Err(Error::shape("masked_cosine", format!("mask over {} nodes, features have {} rows", mask.n(), x.n())));
    }
    let norms = row_norms(x);
    let mut trip = Vec::with_capacity(mask.nnz());
    for (u, v, _) in mask.entries() {
        let c = cosine(x, &norms, u, v);
        if c != 0.0 {
            trip.push((u as u32, v as u32, c));
        }
    }
    SparseGraph::from_triplets(x.n(), trip)
}

/// Keeps the `k` largest entries of each row (ties go to the smaller column
/// id). The result is generally not symmetric.
pub fn topk_rows(m: &SparseGraph, k: usize) -> Result<SparseGraph> {
    if k == 0 {
        return Err(Error::Input("top-k requires k >= 1".into()));
    }
    let mut trip = Vec::new();
    let mut row: Vec<(u32, f64)> = Vec::new();
    for u in 0..m.n() {
        row.clear();
        row.extend(m.neighbors(u).iter().copied().zip(m.row_values(u).iter().copied()));
        select_topk(&mut row, k);
        trip.extend(row.iter().map(|&(v, w)| (u as u32, v, w)));
    }
    SparseGraph::from_triplets(m.n(), trip)
}

fn select_topk(row: &mut Vec<(u32, f64)>, k: usize) {
    if row.len() > k {
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        row.truncate(k);
    }
}

/// Top-k cosine neighbours of every node over all other nodes, without any
/// motif mask. Quadratic in `n`; used by the unmasked ablation.
pub fn topk_cosine_unmasked(x: &FeatureMatrix, k: usize) -> Result<SparseGraph> {
    if k == 0 {
        return Err(Error::Input("top-k requires k >= 1".into()));
    }
    let n = x.n();
    let norms = row_norms(x);
    let per_row = |u: usize| -> Vec<(u32, u32, f64)> {
        let mut row: Vec<(u32, f64)> = (0..n)
            .filter(|&v| v != u)
            .map(|v| (v as u32, cosine(x, &norms, u, v)))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        select_topk(&mut row, k);
        row.into_iter().map(|(v, c)| (u as u32, v, c)).collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<_>> = (0..n).into_par_iter().map(per_row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<_>> = (0..n).map(per_row).collect();
    SparseGraph::from_triplets(n, rows.into_iter().flatten().collect())
}

/// Full construction for each motif: instances, co-occurrence, support mask,
/// masked cosine, row-wise top-k.
pub fn build_semantic_graphs(
    g: &SparseGraph,
    x: &FeatureMatrix,
    patterns: &[MotifPattern],
    k: usize,
) -> Result<SemanticGraphSet> {
    if patterns.is_empty() {
        return Err(Error::Input("at least one motif pattern is required".into()));
    }
    if g.n() != x.n() {
        return Err(Error::shape("build_semantic_graphs", format!("graph has {} nodes, features {} rows", g.n(), x.n())));
    }
    let mut graphs = Vec::with_capacity(patterns.len());
    let mut instance_counts = Vec::with_capacity(patterns.len());
    for p in patterns {
        let inst = enumerate_instances(g, p);
        if inst.is_empty() {
            log::warn!("motif `{}` has no instances; its semantic graph is empty", p.name());
        }
        instance_counts.push(inst.len());
        let mask = nonzero_mask(&cooccurrence(&inst, g));
        graphs.push(topk_rows(&masked_cosine(x, &mask)?, k)?);
    }
    Ok(SemanticGraphSet {
        graphs,
        k,
        motif_names: patterns.iter().map(|p| p.name().to_string()).collect(),
        instance_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Matrix;

    fn feats(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn full_mask(n: usize) -> SparseGraph {
        let mut e = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                e.push((u, v, 1.0));
            }
        }
        SparseGraph::from_undirected_edges(n, &e).unwrap()
    }

    #[test]
    fn masked_cosine_examples() {
        let x = feats(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![-2.0, 1.0], vec![0.0, 0.0]]);
        let c = masked_cosine(&x, &full_mask(4)).unwrap();
        assert!((c.get(0, 1).unwrap() - 1.0).abs() < 1e-15);
        // orthogonal and zero-norm pairs are not stored
        assert_eq!(c.get(0, 2), None);
        assert_eq!(c.get(3, 0), None);
        let mask = SparseGraph::from_undirected_edges(4, &[(0, 2, 1.0)]).unwrap();
        let c = masked_cosine(&x, &mask).unwrap();
        assert_eq!(c.get(0, 1), None);
        assert!(masked_cosine(&x, &SparseGraph::empty(3)).is_err());
    }

    #[test]
    fn topk_examples() {
        let m = SparseGraph::from_triplets(4, vec![(0, 1, 0.9), (0, 2, 0.5), (0, 3, 0.1), (1, 0, 0.3)]).unwrap();
        let t = topk_rows(&m, 2).unwrap();
        assert_eq!(t.neighbors(0), &[1, 2]);
        assert_eq!(t.neighbors(1), &[0]);
        assert!(topk_rows(&m, 0).is_err());

        let tie = SparseGraph::from_triplets(4, vec![(0, 3, 0.5), (0, 1, 0.5), (0, 2, 0.5)]).unwrap();
        let t = topk_rows(&tie, 2).unwrap();
        assert_eq!(t.neighbors(0), &[1, 2]);
        assert_eq!(topk_rows(&tie, 2).unwrap(), t);
    }

    #[test]
    fn negative_cosines_compete() {
        let m = SparseGraph::from_triplets(3, vec![(0, 1, -0.2), (0, 2, -0.9)]).unwrap();
        let t = topk_rows(&m, 1).unwrap();
        assert_eq!(t.get(0, 1), Some(-0.2));
    }

    #[test]
    fn triangle_with_identical_features() {
        let g = full_mask(3);
        let x = feats(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let sg = build_semantic_graphs(&g, &x, &[MotifPattern::triangle()], 2).unwrap();
        let a = &sg.graphs[0];
        assert_eq!(a.nnz(), 6);
        assert!(a.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(sg.instance_counts, vec![1]);

        let none = build_semantic_graphs(&g, &x, &[MotifPattern::clique4()], 2).unwrap();
        assert_eq!(none.graphs[0].nnz(), 0);
        assert!(build_semantic_graphs(&g, &x, &[], 2).is_err());
    }

    #[test]
    fn unmasked_topk_skips_self() {
        let x = feats(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]]);
        let t = topk_cosine_unmasked(&x, 1).unwrap();
        assert_eq!(t.neighbors(0), &[1]);
        assert_eq!(t.neighbors(1), &[0]);
        assert_eq!(t.neighbors(2), &[1]);
    }
}
