//! Browser bindings for three small demos: semantic-graph construction on a
//! toy overlapping-community graph, the PPR diffusion matrix of that graph,
//! and the learning-rate schedule used in training.
//!
//! Every export returns a JSON string; errors come back as
//! `{"error": "..."}` so the page can show them instead of throwing.

use fsgcl::motif::MotifPattern;
use fsgcl::semantic::build_semantic_graphs;
use fsgcl::synth::{generate, SynthConfig, SynthGraph};
use fsgcl::trainer::lr_schedule;
use fsgcl::views::ppr_diffusion;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest graph the page will build; the diffusion matrix is dense.
pub const MAX_NODES: usize = 240;

#[derive(Debug, Serialize)]
pub struct SemanticDemo {
    pub n: usize,
    /// Community ids per node, one or two each.
    pub labels: Vec<Vec<u32>>,
    pub edges: Vec<(u32, u32)>,
    /// Directed `(u, v, cosine)` entries of the semantic graph.
    pub semantic: Vec<(u32, u32, f64)>,
    pub instances: usize,
    /// Fraction of semantic edges whose endpoints share a community.
    pub semantic_purity: f64,
    /// The same fraction for the input edges.
    pub edge_purity: f64,
}

#[derive(Debug, Serialize)]
pub struct PprDemo {
    pub n: usize,
    /// Node order used for the rows and columns, grouped by community.
    pub order: Vec<usize>,
    /// Row-major `n × n` values in that order.
    pub values: Vec<f64>,
    pub max_off_diagonal: f64,
}

/// Small overlapping-community graph: a fifth of the nodes sit in two
/// communities, community sizes within ±40 % of the mean.
pub fn toy_graph(n: usize, communities: usize, seed: u64) -> fsgcl::Result<SynthGraph> {
    if !(20..=MAX_NODES).contains(&n) || communities < 2 || communities > n / 8 {
        return Err(fsgcl::Error::Input(format!("need 20 ≤ n ≤ {MAX_NODES} and 2 ≤ communities ≤ n/8")));
    }
    let overlap = n / 5;
    let mean = (n + overlap) as f64 / communities as f64;
    let cfg = SynthConfig {
        n,
        avg_degree: 6.0,
        max_degree: 14.min(n - 1),
        mu: 0.15,
        minc: (0.6 * mean).floor() as usize,
        maxc: (1.4 * mean).ceil() as usize,
        communities,
        overlap_nodes: overlap,
        memberships: 2,
        noise_dim: 2,
        noise: 0.4,
        seed,
    };
    generate(&cfg)
}

fn shares_community(s: &SynthGraph, u: usize, v: usize) -> bool {
    let lv = s.labels.of(v);
    s.labels.of(u).iter().any(|c| lv.contains(c))
}

fn purity(s: &SynthGraph, pairs: impl Iterator<Item = (usize, usize)>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for (u, v) in pairs {
        total += 1;
        hit += usize::from(shares_community(s, u, v));
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

pub fn semantic_demo_data(n: usize, communities: usize, motif: &str, k: usize, seed: u64) -> fsgcl::Result<SemanticDemo> {
    let s = toy_graph(n, communities, seed)?;
    let pattern = MotifPattern::builtin(motif).ok_or_else(|| fsgcl::Error::Input(format!("unknown motif `{motif}`")))?;
    let sg = build_semantic_graphs(&s.graph, &s.features, &[pattern], k)?;
    let a = &sg.graphs[0];
    Ok(SemanticDemo {
        n,
        labels: (0..n).map(|i| s.labels.of(i).to_vec()).collect(),
        edges: s.graph.undirected_edges().map(|(u, v, _)| (u as u32, v as u32)).collect(),
        semantic: a.entries().map(|(u, v, w)| (u as u32, v as u32, w)).collect(),
        instances: sg.instance_counts[0],
        semantic_purity: purity(&s, a.entries().map(|(u, v, _)| (u, v))),
        edge_purity: purity(&s, s.graph.undirected_edges().map(|(u, v, _)| (u, v))),
    })
}

pub fn ppr_demo_data(n: usize, communities: usize, alpha: f64, seed: u64) -> fsgcl::Result<PprDemo> {
    let s = toy_graph(n, communities, seed)?;
    let u = ppr_diffusion(&s.graph, alpha)?;
    let primary = s.labels.primary();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (primary[i], s.labels.of(i).len(), i));
    let mut values = Vec::with_capacity(n * n);
    let mut max_off_diagonal = 0.0f64;
    for &i in &order {
        for &j in &order {
            let v = u.get(i, j);
            if i != j {
                max_off_diagonal = max_off_diagonal.max(v);
            }
            values.push(v);
        }
    }
    Ok(PprDemo { n, order, values, max_off_diagonal })
}

/// Learning rate at every step `0..=total`.
pub fn lr_curve_data(base_lr: f64, warmup: usize, total: usize) -> fsgcl::Result<Vec<f64>> {
    if warmup > total || total == 0 || total > 100_000 || !(base_lr > 0.0 && base_lr.is_finite()) {
        return Err(fsgcl::Error::Input("need 0 ≤ warmup ≤ total ≤ 100000 and a positive learning rate".into()));
    }
    Ok((0..=total).map(|s| lr_schedule(s, base_lr, warmup, total)).collect())
}

fn to_json<T: Serialize>(r: fsgcl::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("demo payloads serialize"),
        Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
    }
}

/// Builds a toy graph and its semantic graph for one motif.
#[wasm_bindgen]
pub fn semantic_demo(n: usize, communities: usize, motif: &str, k: usize, seed: u64) -> String {
    to_json(semantic_demo_data(n, communities, motif, k, seed))
}

/// Dense PPR diffusion of the toy graph, rows grouped by community.
#[wasm_bindgen]
pub fn ppr_demo(n: usize, communities: usize, alpha: f64, seed: u64) -> String {
    to_json(ppr_demo_data(n, communities, alpha, seed))
}

/// Warmup-then-cosine learning-rate curve.
#[wasm_bindgen]
pub fn lr_curve(base_lr: f64, warmup: usize, total: usize) -> String {
    to_json(lr_curve_data(base_lr, warmup, total))
}
