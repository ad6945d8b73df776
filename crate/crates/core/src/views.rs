//! Two augmented views: view 1 pairs the adjacency with the semantic graphs,
//! view 2 pairs the personalized PageRank diffusion with the same semantic
//! graphs. Both carry independently dropped-out features.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{sym_normalized_adjacency, FeatureMatrix, SparseGraph};
use crate::semantic::SemanticGraphSet;

/// Above this node count the diffusion is computed by a truncated power
/// series instead of a direct solve.
pub const PPR_DIRECT_MAX_N: usize = 5000;

/// Graph structure fed to one encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Sparse(SparseGraph),
    Dense(Matrix),
}

impl Structure {
    pub fn n(&self) -> usize {
        match self {
            Structure::Sparse(g) => g.n(),
            Structure::Dense(m) => m.rows(),
        }
    }

    pub fn as_sparse(&self) -> Option<&SparseGraph> {
        match self {
            Structure::Sparse(g) => Some(g),
            Structure::Dense(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphView {
    pub features: FeatureMatrix,
    /// Index 0 is the holistic structure, 1..=T the semantic graphs.
    pub structures: Vec<Structure>,
}

/// `α (I − (1−α) D^{-1/2} A D^{-1/2})^{-1}`.
///
/// Up to [`PPR_DIRECT_MAX_N`] nodes this is a Cholesky solve (the system
/// matrix is symmetric with spectrum in `[α, 2−α]`). Larger graphs use the
/// series `Σ_t α(1−α)^t Â^t`, truncated once `(1−α)^{t+1} < 1e-6`.
pub fn ppr_diffusion(g: &SparseGraph, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    if g.n() <= PPR_DIRECT_MAX_N {
        ppr_direct(g, alpha)
    } else {
        ppr_series(g, alpha, 1e-6)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("teleport probability must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn ppr_direct(g: &SparseGraph, alpha: f64) -> Result<Matrix> {
    let n = g.n();
    let a_hat = sym_normalized_adjacency(g, false);
    let mut sys = DMatrix::<f64>::identity(n, n);
    for (u, v, w) in a_hat.entries() {
        sys[(u, v)] -= (1.0 - alpha) * w;
    }
    let chol = sys
        .cholesky()
        .ok_or_else(|| Error::Contract("diffusion system is not positive definite".into()))?;
    let inv = chol.inverse();
    let mut out = Matrix::zeros(n, n);
    for u in 0..n {
        for v in 0..n {
            out.set(u, v, 0.5 * alpha * (inv[(u, v)] + inv[(v, u)]));
        }
    }
    Ok(out)
}

/// Truncated power series, exposed for large graphs and for cross-checks.
pub fn ppr_series(g: &SparseGraph, alpha: f64, tol: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    let n = g.n();
    let a_hat = sym_normalized_adjacency(g, false);
    let mut term = Matrix::identity(n);
    term.scale_in_place(alpha);
    let mut acc = term.clone();
    let mut decay = 1.0 - alpha;
    // (1-α)^{t+1} bounds the tail after term t because ‖Â‖ ≤ 1.
    while decay >= tol {
        term = a_hat.spmm(&term)?;
        term.scale_in_place(1.0 - alpha);
        acc.add_assign(&term);
        decay *= 1.0 - alpha;
    }
    Ok(acc)
}

/// Diffusion as an encoder structure. Graphs larger than
/// [`PPR_DIRECT_MAX_N`] are sparsified by dropping entries `<= threshold`.
pub fn ppr_structure(g: &SparseGraph, alpha: f64, sparsify_threshold: f64) -> Result<Structure> {
    let u = ppr_diffusion(g, alpha)?;
    if g.n() <= PPR_DIRECT_MAX_N {
        return Ok(Structure::Dense(u));
    }
    let mut trip = Vec::new();
    for r in 0..u.rows() {
        for (c, &v) in u.row(r).iter().enumerate() {
            if v > sparsify_threshold {
                trip.push((r as u32, c as u32, v));
            }
        }
    }
    Ok(Structure::Sparse(SparseGraph::from_triplets(g.n(), trip)?))
}

/// Deterministic generator keyed by `(seed, step, view)`.
pub fn augmentation_rng(seed: u64, step: u64, view: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step.wrapping_mul(4).wrapping_add(view));
    rng
}

/// Zeroes each element independently with probability `r`. No rescaling.
pub fn feature_dropout(x: &FeatureMatrix, r: f64, seed: u64) -> Result<FeatureMatrix> {
    feature_dropout_with(x, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn feature_dropout_with<R: Rng>(x: &FeatureMatrix, r: f64, rng: &mut R) -> Result<FeatureMatrix> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Input(format!("drop rate must lie in [0, 1), got {r}")));
    }
    let mut m = x.matrix().clone();
    if r > 0.0 {
        for v in m.as_mut_slice() {
            if rng.gen::<f64>() < r {
                *v = 0.0;
            }
        }
    }
    FeatureMatrix::new(m)
}

/// Drops each stored entry with probability `r`.
pub fn edge_dropout<R: Rng>(g: &SparseGraph, r: f64, rng: &mut R) -> Result<SparseGraph> {
    let trip = g
        .entries()
        .filter(|_| rng.gen::<f64>() >= r)
        .map(|(u, v, w)| (u as u32, v as u32, w))
        .collect();
    SparseGraph::from_triplets(g.n(), trip)
}

/// Builds both views with features dropped under sub-seeds
/// `(seed, step 0, view 0)` and `(seed, step 0, view 1)`.
pub fn build_views(
    g: &SparseGraph,
    x: &FeatureMatrix,
    sg: &SemanticGraphSet,
    alpha: f64,
    r: f64,
    seed: u64,
) -> Result<(GraphView, GraphView)> {
    if g.n() != x.n() || sg.graphs.iter().any(|s| s.n() != g.n()) {
        return Err(Error::shape("build_views", "graph, features and semantic graphs disagree on node count"));
    }
    let semantic: Vec<Structure> = sg.graphs.iter().cloned().map(Structure::Sparse).collect();
    let mut s1 = vec![Structure::Sparse(g.clone())];
    s1.extend(semantic.iter().cloned());
    let mut s2 = vec![ppr_structure(g, alpha, 1e-4)?];
    s2.extend(semantic);
    let v1 = GraphView { features: feature_dropout_with(x, r, &mut augmentation_rng(seed, 0, 0))?, structures: s1 };
    let v2 = GraphView { features: feature_dropout_with(x, r, &mut augmentation_rng(seed, 0, 1))?, structures: s2 };
    Ok((v1, v2))
}
