//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod grad;

use std::collections::BTreeMap;

use fsgcl::{Matrix, SparseGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Erdős–Rényi graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.gen::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    SparseGraph::from_undirected_edges(n, &edges).unwrap()
}

fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            go(v + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, m, &mut Vec::new(), &mut out);
    out
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, m - 1);
            out.push(q);
        }
    }
    out
}

/// Exhaustive motif matching: every `m`-subset of nodes times every bijection
/// onto the pattern. Returns each matched vertex set (sorted) with the set of
/// host pairs that some valid bijection maps a pattern edge onto.
pub fn brute_force_instances(
    g: &SparseGraph,
    m: usize,
    pattern_edges: &[(usize, usize)],
) -> BTreeMap<Vec<u32>, Vec<(u32, u32)>> {
    let mut out = BTreeMap::new();
    if g.n() < m {
        return out;
    }
    let perms = permutations(m);
    for set in subsets(g.n(), m) {
        let mut pairs = std::collections::BTreeSet::new();
        let mut matched = false;
        // perm[i] = index into `set` assigned to pattern node i
        for perm in &perms {
            let ok = pattern_edges.iter().all(|&(a, b)| g.has_edge(set[perm[a]], set[perm[b]]));
            if ok {
                matched = true;
                for &(a, b) in pattern_edges {
                    let (x, y) = (set[perm[a]] as u32, set[perm[b]] as u32);
                    pairs.insert((x.min(y), x.max(y)));
                }
            }
        }
        if matched {
            out.insert(set.iter().map(|&v| v as u32).collect(), pairs.into_iter().collect());
        }
    }
    out
}

/// Co-occurrence counts derived from the brute-force instance map.
pub fn brute_force_cooccurrence(n: usize, inst: &BTreeMap<Vec<u32>, Vec<(u32, u32)>>) -> Matrix {
    let mut o = Matrix::zeros(n, n);
    for pairs in inst.values() {
        for &(u, v) in pairs {
            let (u, v) = (u as usize, v as usize);
            o.set(u, v, o.get(u, v) + 1.0);
            o.set(v, u, o.get(v, u) + 1.0);
        }
    }
    o
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut aug = vec![vec![0.0; 2 * n]; n];
    for i in 0..n {
        for j in 0..n {
            aug[i][j] = a.get(i, j);
        }
        aug[i][n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs())).unwrap();
        aug.swap(col, piv);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            inv.set(i, j, aug[i][n + j]);
        }
    }
    inv
}

/// Dense reference for the personalized PageRank diffusion matrix:
/// `α (I − (1−α) D^{-1/2} A D^{-1/2})^{-1}` built entrywise from the
/// adjacency with 0/0 := 0 for isolated nodes.
pub fn dense_ppr(g: &SparseGraph, alpha: f64) -> Matrix {
    let n = g.n();
    let a = g.to_dense();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let mut m = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            let aij = a.get(i, j);
            if aij != 0.0 {
                let norm = aij / (deg[i].sqrt() * deg[j].sqrt());
                m.set(i, j, m.get(i, j) - (1.0 - alpha) * norm);
            }
        }
    }
    let mut inv = gauss_jordan_inverse(&m);
    inv.scale_in_place(alpha);
    inv
}
