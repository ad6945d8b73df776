//! Motif instance enumeration and motif co-occurrence counting.
//!
//! Matching is non-induced: a vertex set is an instance when some bijection
//! onto the pattern maps every pattern edge to a host edge. Extra host edges
//! among the vertex set are allowed. Each vertex set is reported once no
//! matter how many bijections realize it.
//!
//! The enumerator is a backtracking matcher. Pattern nodes are visited in a
//! connectivity-first order so every candidate after the root comes from the
//! adjacency list of an already-matched node. Automorphisms of the pattern
//! are broken with ordering constraints on host ids so each embedding class
//! is produced once; remaining duplicates (one vertex set realizing several
//! non-equivalent embeddings, e.g. a 4-cycle inside a 4-clique) are merged
//! after a sort.

use std::collections::VecDeque;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Largest supported pattern size. Pair masks are stored in a `u32`, which
/// fits the 28 pairs of an 8-node pattern.
pub const MAX_MOTIF_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifPattern {
    name: String,
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl MotifPattern {
    pub fn new(name: impl Into<String>, m: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let name = name.into();
        if !(2..=MAX_MOTIF_NODES).contains(&m) {
            return Err(Error::Input(format!("motif `{name}`: node count {m} outside 2..={MAX_MOTIF_NODES}")));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::Input(format!("motif `{name}`: edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Input(format!("motif `{name}`: self-loop on {a}")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        let p = MotifPattern { name, m, edges: canon };
        if !p.is_connected() {
            return Err(Error::Input(format!("motif `{}` is not connected", p.name)));
        }
        Ok(p)
    }

    pub fn triangle() -> Self {
        MotifPattern::new("triangle", 3, vec![(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    pub fn clique4() -> Self {
        MotifPattern::new("4-clique", 4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
    }

    pub fn cycle4() -> Self {
        MotifPattern::new("4-cycle", 4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap()
    }

    /// Default motif set: triangle, 4-clique, 4-cycle.
    pub fn defaults() -> Vec<Self> {
        vec![Self::triangle(), Self::clique4(), Self::cycle4()]
    }

    /// Looks up one of the built-in patterns by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "triangle" => Some(Self::triangle()),
            "4-clique" | "clique4" => Some(Self::clique4()),
            "4-cycle" | "cycle4" => Some(Self::cycle4()),
            "3-path" | "wedge" => Some(MotifPattern::new("3-path", 3, vec![(0, 1), (1, 2)]).unwrap()),
            "4-star" => Some(MotifPattern::new("4-star", 4, vec![(0, 1), (0, 2), (0, 3)]).unwrap()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn adjacency(&self) -> Vec<u32> {
        let mut adj = vec![0u32; self.m];
        for &(a, b) in &self.edges {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = 1u32;
        let mut queue = VecDeque::from([0usize]);
        while let Some(a) = queue.pop_front() {
            for b in 0..self.m {
                if adj[a] & (1 << b) != 0 && seen & (1 << b) == 0 {
                    seen |= 1 << b;
                    queue.push_back(b);
                }
            }
        }
        seen.count_ones() as usize == self.m
    }

    /// All automorphisms as permutations `perm[node] = image`.
    pub fn automorphisms(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        let mut perm: Vec<usize> = (0..self.m).collect();
        permute(&mut perm, 0, &mut |p| {
            let preserves = self.edges.iter().all(|&(a, b)| adj[p[a]] & (1 << p[b]) != 0);
            if preserves {
                out.push(p.to_vec());
            }
        });
        out
    }
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Index of the unordered position pair `(a, b)`, `a < b`, within an
/// `m`-tuple, used for bit masks over tuple pairs.
#[inline]
pub fn pair_index(a: usize, b: usize, m: usize) -> usize {
    debug_assert!(a < b && b < m);
    a * (2 * m - a - 1) / 2 + (b - a - 1)
}

/// Matched vertex sets of one motif.
///
/// Tuples are stored flat with stride `m`, each sorted ascending, and the
/// whole set is sorted lexicographically. `edge_masks[i]` records which
/// position pairs of tuple `i` are images of a motif edge under at least one
/// realizing bijection (see [`pair_index`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSet {
    motif: MotifPattern,
    tuples: Vec<u32>,
    edge_masks: Vec<u32>,
}

impl InstanceSet {
    pub fn motif(&self) -> &MotifPattern {
        &self.motif
    }

    pub fn len(&self) -> usize {
        self.edge_masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_masks.is_empty()
    }

    pub fn tuple(&self, i: usize) -> &[u32] {
        let m = self.motif.m;
        &self.tuples[i * m..(i + 1) * m]
    }

    pub fn edge_mask(&self, i: usize) -> u32 {
        self.edge_masks[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], u32)> + '_ {
        self.tuples.chunks_exact(self.motif.m).zip(self.edge_masks.iter().copied())
    }

    /// Node pairs covered by instance `i`.
    pub fn matched_pairs(&self, i: usize) -> Vec<(u32, u32)> {
        let m = self.motif.m;
        let t = self.tuple(i);
        let mask = self.edge_masks[i];
        let mut out = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                if mask & (1 << pair_index(a, b, m)) != 0 {
                    out.push((t[a], t[b]));
                }
            }
        }
        out
    }
}

/// Per-position search plan derived from the pattern.
struct Plan {
    m: usize,
    /// For each position > 0, an earlier position adjacent in the pattern.
    anchor: Vec<usize>,
    /// Earlier positions adjacent in the pattern to each position.
    back_edges: Vec<Vec<usize>>,
    /// Pattern degree of each position.
    degree: Vec<usize>,
    /// `(earlier, later)` position pairs requiring host id of `earlier` < `later`
    /// (or the reverse when `flip` is set), checked once both are matched.
    less_than: Vec<Vec<(usize, bool)>>,
}

impl Plan {
    fn new(p: &MotifPattern) -> Self {
        let m = p.m;
        let adj = p.adjacency();
        let deg: Vec<usize> = (0..m).map(|a| adj[a].count_ones() as usize).collect();

        let mut order = Vec::with_capacity(m);
        let mut placed = 0u32;
        let first = (0..m).max_by_key(|&a| (deg[a], std::cmp::Reverse(a))).unwrap();
        order.push(first);
        placed |= 1 << first;
        while order.len() < m {
            let next = (0..m)
                .filter(|&a| placed & (1 << a) == 0 && adj[a] & placed != 0)
                .max_by_key(|&a| ((adj[a] & placed).count_ones(), deg[a], std::cmp::Reverse(a)))
                .expect("pattern is connected");
            order.push(next);
            placed |= 1 << next;
        }
        let pos_of = {
            let mut v = vec![0; m];
            for (k, &a) in order.iter().enumerate() {
                v[a] = k;
            }
            v
        };

        let mut anchor = vec![0; m];
        let mut back_edges = vec![Vec::new(); m];
        for k in 0..m {
            for j in 0..k {
                if adj[order[k]] & (1 << order[j]) != 0 {
                    back_edges[k].push(j);
                }
            }
            if k > 0 {
                anchor[k] = back_edges[k][0];
            }
        }

        // Symmetry breaking: fix one node per nontrivial orbit of the current
        // stabilizer subgroup, requiring it to take the smallest host id in
        // its orbit.
        let mut auts = p.automorphisms();
        let mut less_than = vec![Vec::new(); m];
        for &v in &order {
            if auts.len() <= 1 {
                break;
            }
            let mut orbit: Vec<usize> = auts.iter().map(|s| s[v]).collect();
            orbit.sort_unstable();
            orbit.dedup();
            for &u in orbit.iter().filter(|&&u| u != v) {
                let (pv, pu) = (pos_of[v], pos_of[u]);
                // Constraint host(v) < host(u), attached to the later position.
                if pv < pu {
                    less_than[pu].push((pv, false));
                } else {
                    less_than[pv].push((pu, true));
                }
            }
            auts.retain(|s| s[v] == v);
        }

        let degree = order.iter().map(|&a| deg[a]).collect();
        Plan { m, anchor, back_edges, degree, less_than }
    }
}

type Found = ([u32; MAX_MOTIF_NODES], u32);

fn search_from_root(g: &SparseGraph, plan: &Plan, root: u32, pattern_pair_pos: &[Vec<usize>]) -> Vec<Found> {
    let mut out = Vec::new();
    let mut mapped = [0u32; MAX_MOTIF_NODES];
    mapped[0] = root;
    extend(g, plan, 1, &mut mapped, pattern_pair_pos, &mut out);
    out
}

fn extend(
    g: &SparseGraph,
    plan: &Plan,
    k: usize,
    mapped: &mut [u32; MAX_MOTIF_NODES],
    pattern_pair_pos: &[Vec<usize>],
    out: &mut Vec<Found>,
) {
    let m = plan.m;
    if k == m {
        out.push(record(plan, mapped, pattern_pair_pos));
        return;
    }
    let anchor_host = mapped[plan.anchor[k]] as usize;
    'cand: for &c in g.neighbors(anchor_host) {
        if g.degree(c as usize) < plan.degree[k] {
            continue;
        }
        if mapped[..k].contains(&c) {
            continue;
        }
        for &(j, flip) in &plan.less_than[k] {
            let ok = if flip { c < mapped[j] } else { mapped[j] < c };
            if !ok {
                continue 'cand;
            }
        }
        for &j in &plan.back_edges[k] {
            if j != plan.anchor[k] && !g.has_edge(mapped[j] as usize, c as usize) {
                continue 'cand;
            }
        }
        mapped[k] = c;
        extend(g, plan, k + 1, mapped, pattern_pair_pos, out);
    }
}

/// Converts an embedding (host ids by search position) into its sorted vertex
/// tuple plus the mask of tuple pairs that carry a motif edge.
fn record(plan: &Plan, mapped: &[u32; MAX_MOTIF_NODES], pattern_edges_by_pos: &[Vec<usize>]) -> Found {
    let m = plan.m;
    let mut tuple = [u32::MAX; MAX_MOTIF_NODES];
    tuple[..m].copy_from_slice(&mapped[..m]);
    tuple[..m].sort_unstable();
    let rank = |h: u32| tuple[..m].binary_search(&h).unwrap();
    let mut mask = 0u32;
    for (k, later) in pattern_edges_by_pos.iter().enumerate() {
        for &j in later {
            let (a, b) = (rank(mapped[k]), rank(mapped[j]));
            mask |= 1 << pair_index(a.min(b), a.max(b), m);
        }
    }
    (tuple, mask)
}

/// Enumerates all vertex sets of `g` that admit a (non-induced) embedding of
/// `p`. Edge weights are ignored. Output order is canonical regardless of
/// thread count.
pub fn enumerate_instances(g: &SparseGraph, p: &MotifPattern) -> InstanceSet {
    let plan = Plan::new(p);
    let m = p.m;
    // For every search position, the later positions it shares a pattern edge
    // with; each pattern edge is listed exactly once.
    let edges_by_pos: Vec<Vec<usize>> = (0..m).map(|k| {
        (k + 1..m).filter(|&j| plan.back_edges[j].contains(&k)).collect()
    }).collect();

    let mut found: Vec<Found> = if g.n() < m {
        Vec::new()
    } else {
        let roots = (0..g.n() as u32).filter(|&r| g.degree(r as usize) >= plan.degree[0]);
        #[cfg(feature = "parallel")]
        let per_root: Vec<Vec<Found>> = roots
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|r| search_from_root(g, &plan, r, &edges_by_pos))
            .collect();
        #[cfg(not(feature = "parallel"))]
        let per_root: Vec<Vec<Found>> = roots.map(|r| search_from_root(g, &plan, r, &edges_by_pos)).collect();
        per_root.into_iter().flatten().collect()
    };
    found.sort_unstable_by(|a, b| a.0.cmp(&b.0));

    let mut tuples = Vec::new();
    let mut edge_masks: Vec<u32> = Vec::new();
    let mut last: Option<[u32; MAX_MOTIF_NODES]> = None;
    for (t, mask) in found {
        if last == Some(t) {
            *edge_masks.last_mut().unwrap() |= mask;
        } else {
            tuples.extend_from_slice(&t[..m]);
            edge_masks.push(mask);
            last = Some(t);
        }
    }
    InstanceSet { motif: p.clone(), tuples, edge_masks }
}

/// Symmetric matrix of motif co-occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix(SparseGraph);

impl CooccurrenceMatrix {
    pub fn graph(&self) -> &SparseGraph {
        &self.0
    }

    pub fn count(&self, u: usize, v: usize) -> u64 {
        self.0.get(u, v).map_or(0, |c| c as u64)
    }

    pub fn n(&self) -> usize {
        self.0.n()
    }
}

/// `O[u, v]` = number of instances in which `(u, v)` is the image of a motif
/// edge. Only host edges can be covered, so counts accumulate along the host
/// CSR layout.
pub fn cooccurrence(s: &InstanceSet, g: &SparseGraph) -> CooccurrenceMatrix {
    let mut counts = vec![0u64; g.nnz()];
    let slot = |u: u32, v: u32| -> usize {
        let u = u as usize;
        let off = g.neighbors(u).binary_search(&v).expect("instance pair must be a host edge");
        g.row_ptr()[u] + off
    };
    for i in 0..s.len() {
        for (u, v) in s.matched_pairs(i) {
            counts[slot(u, v)] += 1;
            counts[slot(v, u)] += 1;
        }
    }
    let mut trip = Vec::new();
    for (idx, (u, v, _)) in g.entries().enumerate() {
        if counts[idx] > 0 {
            trip.push((u as u32, v as u32, counts[idx] as f64));
        }
    }
    CooccurrenceMatrix(SparseGraph::from_triplets(g.n(), trip).expect("host indices are valid"))
}

/// Binary support of a co-occurrence matrix.
pub fn nonzero_mask(o: &CooccurrenceMatrix) -> SparseGraph {
    let trip = o.0.entries().filter(|e| e.2 != 0.0).map(|(u, v, _)| (u as u32, v as u32, 1.0)).collect();
    SparseGraph::from_triplets(o.n(), trip).expect("indices are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(u32, u32)]) -> SparseGraph {
        let e: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
        SparseGraph::from_undirected_edges(n, &e).unwrap()
    }

    fn k4() -> SparseGraph {
        graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
    }

    #[test]
    fn pattern_validation() {
        assert!(MotifPattern::new("x", 3, vec![(0, 1)]).is_err());
        assert!(MotifPattern::new("x", 2, vec![(0, 0)]).is_err());
        assert!(MotifPattern::new("x", 1, vec![]).is_err());
        assert!(MotifPattern::new("x", 3, vec![(0, 5), (1, 2)]).is_err());
        assert_eq!(MotifPattern::triangle().automorphisms().len(), 6);
        assert_eq!(MotifPattern::cycle4().automorphisms().len(), 8);
        assert_eq!(MotifPattern::clique4().automorphisms().len(), 24);
    }

    #[test]
    fn pair_index_is_dense() {
        for m in 2..=MAX_MOTIF_NODES {
            let mut seen = Vec::new();
            for a in 0..m {
                for b in a + 1..m {
                    seen.push(pair_index(a, b, m));
                }
            }
            let expect: Vec<usize> = (0..m * (m - 1) / 2).collect();
            assert_eq!(seen, expect);
        }
    }

    #[test]
    fn triangle_examples() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let s = enumerate_instances(&tri, &MotifPattern::triangle());
        assert_eq!(s.len(), 1);
        assert_eq!(s.tuple(0), &[0, 1, 2]);

        assert_eq!(enumerate_instances(&k4(), &MotifPattern::triangle()).len(), 4);
        assert!(enumerate_instances(&graph(3, &[(0, 1), (1, 2)]), &MotifPattern::triangle()).is_empty());
        assert!(enumerate_instances(&graph(2, &[(0, 1)]), &MotifPattern::triangle()).is_empty());
    }

    #[test]
    fn cycle_in_clique_counts_once_with_all_pairs() {
        let s = enumerate_instances(&k4(), &MotifPattern::cycle4());
        assert_eq!(s.len(), 1);
        assert_eq!(s.edge_mask(0).count_ones(), 6);

        let square = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let s = enumerate_instances(&square, &MotifPattern::cycle4());
        assert_eq!(s.len(), 1);
        assert_eq!(s.matched_pairs(0), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn cooccurrence_examples() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let o = cooccurrence(&enumerate_instances(&tri, &MotifPattern::triangle()), &tri);
        assert_eq!(o.graph().nnz(), 6);
        assert!(o.graph().values().iter().all(|&c| c == 1.0));

        let o = cooccurrence(&enumerate_instances(&k4(), &MotifPattern::triangle()), &k4());
        assert!(o.graph().values().iter().all(|&c| c == 2.0));
        assert_eq!(o.graph().nnz(), 12);

        let path = graph(3, &[(0, 1), (1, 2)]);
        let o = cooccurrence(&enumerate_instances(&path, &MotifPattern::triangle()), &path);
        assert_eq!(o.graph().nnz(), 0);
        assert_eq!(nonzero_mask(&o).nnz(), 0);
    }

    #[test]
    fn mask_matches_support() {
        let o = CooccurrenceMatrix(SparseGraph::from_triplets(2, vec![(0, 1, 5.0), (1, 0, 5.0)]).unwrap());
        let r = nonzero_mask(&o);
        assert_eq!(r.get(0, 1), Some(1.0));
        assert_eq!(r.nnz(), 2);
    }
}
