//! LFR-style benchmark graphs with overlapping communities.
//!
//! A simplified generator: community sizes are uniform in `[minc, maxc]`,
//! degrees follow a truncated power law with exponent 2.5, and each node
//! sends a fraction `1 − mu` of its stubs into its own communities. Stubs
//! are paired configuration-model style, rejecting self-loops, repeated
//! edges and (for external stubs) pairs that share a community.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, LabelSet, SparseGraph};

pub const DEGREE_EXPONENT: f64 = 2.5;
const MAX_ATTEMPTS: usize = 20;
const PAIRING_ROUNDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n: usize,
    pub avg_degree: f64,
    pub max_degree: usize,
    pub mu: f64,
    pub minc: usize,
    pub maxc: usize,
    pub communities: usize,
    /// Number of nodes carrying `memberships` communities.
    pub overlap_nodes: usize,
    pub memberships: usize,
    /// Extra columns of pure noise appended after the indicator block.
    pub noise_dim: usize,
    /// Standard deviation of the Gaussian noise on every feature.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// A tenth of the benchmark scale used for the overlapping-community
    /// case study.
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            avg_degree: 20.0,
            max_degree: 50,
            mu: 0.2,
            minc: 150,
            maxc: 300,
            communities: 8,
            overlap_nodes: 800,
            memberships: 2,
            noise_dim: 8,
            noise: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn memberships_total(&self) -> usize {
        self.n + self.overlap_nodes * self.memberships.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if self.n < 2 {
            return bad("n must be at least 2".into());
        }
        if self.minc > self.maxc || self.minc == 0 {
            return bad(format!("community size range [{}, {}] is invalid", self.minc, self.maxc));
        }
        if self.overlap_nodes > self.n {
            return bad("overlap_nodes exceeds n".into());
        }
        if self.memberships == 0 || self.memberships > self.communities {
            return bad(format!("memberships must lie in 1..={}", self.communities));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu must lie in [0, 1], got {}", self.mu));
        }
        if !(self.avg_degree >= 1.0 && self.avg_degree <= self.max_degree as f64) {
            return bad("avg_degree must lie in [1, max_degree]".into());
        }
        if self.max_degree >= self.n {
            return bad("max_degree must be below n".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a finite non-negative number".into());
        }
        let total = self.memberships_total();
        if self.communities * self.minc > total || self.communities * self.maxc < total {
            return Err(Error::Infeasible(format!(
                "{} communities of size [{}, {}] cannot hold {total} memberships",
                self.communities, self.minc, self.maxc
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthGraph {
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub labels: LabelSet,
    pub community_sizes: Vec<usize>,
}

impl SynthGraph {
    /// Fraction of undirected edges whose endpoints share no community.
    pub fn inter_community_fraction(&self) -> f64 {
        let mut total = 0usize;
        let mut inter = 0usize;
        for (u, v, _) in self.graph.undirected_edges() {
            total += 1;
            if !shares(self.labels.of(u), self.labels.of(v)) {
                inter += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            inter as f64 / total as f64
        }
    }

    pub fn mean_degree(&self) -> f64 {
        self.graph.nnz() as f64 / self.graph.n() as f64
    }
}

fn shares(a: &[u32], b: &[u32]) -> bool {
    a.iter().any(|x| b.contains(x))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = community_sizes(cfg, &mut rng);
    let mut membership = None;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(m) = assign_memberships(cfg, &sizes, &mut rng) {
            membership = Some(m);
            break;
        }
    }
    let membership =
        membership.ok_or_else(|| Error::Infeasible("could not place overlapping nodes into distinct communities".into()))?;
    let degrees = sample_degrees(cfg, &mut rng);
    let edges = wire(cfg, &membership, &degrees, &mut rng)?;
    let graph = SparseGraph::from_undirected_edges(cfg.n, &edges)?;
    let labels = LabelSet::new(membership, cfg.communities)?;
    let features = synth_features(cfg, &labels, &mut rng)?;
    Ok(SynthGraph { graph, features, labels, community_sizes: sizes })
}

/// Uniform draws in `[minc, maxc]`, nudged one unit at a time until they sum
/// to the number of memberships.
fn community_sizes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total = cfg.memberships_total();
    let mut sizes: Vec<usize> = (0..cfg.communities).map(|_| rng.gen_range(cfg.minc..=cfg.maxc)).collect();
    let mut sum: usize = sizes.iter().sum();
    while sum != total {
        let c = rng.gen_range(0..cfg.communities);
        if sum < total && sizes[c] < cfg.maxc {
            sizes[c] += 1;
            sum += 1;
        } else if sum > total && sizes[c] > cfg.minc {
            sizes[c] -= 1;
            sum -= 1;
        }
    }
    sizes
}

/// Overlapping nodes pick `om` distinct communities with probability
/// proportional to remaining capacity; the rest fill what is left.
fn assign_memberships(cfg: &SynthConfig, sizes: &[usize], rng: &mut ChaCha8Rng) -> Option<Vec<Vec<u32>>> {
    let mut cap = sizes.to_vec();
    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(rng);
    let mut labels = vec![Vec::new(); cfg.n];
    let (overlap, single) = order.split_at(cfg.overlap_nodes);
    let om = if cfg.overlap_nodes > 0 { cfg.memberships } else { 1 };
    for &v in overlap {
        for _ in 0..om {
            let total: usize = cap.iter().enumerate().filter(|(c, _)| !labels[v].contains(&(*c as u32))).map(|(_, k)| k).sum();
            if total == 0 {
                return None;
            }
            let mut pick = rng.gen_range(0..total);
            let c = (0..cap.len())
                .filter(|c| !labels[v].contains(&(*c as u32)))
                .find(|&c| {
                    if pick < cap[c] {
                        true
                    } else {
                        pick -= cap[c];
                        false
                    }
                })
                .expect("pick within total capacity");
            cap[c] -= 1;
            labels[v].push(c as u32);
        }
    }
    let mut slots: Vec<u32> = cap.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat(c as u32).take(k)).collect();
    slots.shuffle(rng);
    for (&v, c) in single.iter().zip(slots) {
        labels[v].push(c);
    }
    Some(labels)
}

fn power_law_mean(kmin: f64, kmax: f64, g: f64) -> f64 {
    let a = 2.0 - g;
    let b = 1.0 - g;
    ((kmax.powf(a) - kmin.powf(a)) / a) / ((kmax.powf(b) - kmin.powf(b)) / b)
}

/// Continuous power law on `[kmin, max_degree]` with `kmin` chosen by
/// bisection so the mean matches `avg_degree`; draws are rounded.
fn sample_degrees(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let kmax = cfg.max_degree as f64;
    let g = DEGREE_EXPONENT;
    let (mut lo, mut hi) = (1e-3, kmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if power_law_mean(mid, kmax, g) < cfg.avg_degree {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kmin = 0.5 * (lo + hi);
    let b = 1.0 - g;
    let (l, h) = (kmin.powf(b), kmax.powf(b));
    (0..cfg.n)
        .map(|_| {
            let u: f64 = rng.gen();
            let k = (l + u * (h - l)).powf(1.0 / b);
            (k.round() as usize).clamp(1, cfg.max_degree)
        })
        .collect()
}

type EdgeSet = HashSet<(u32, u32)>;

fn key(u: u32, v: u32) -> (u32, u32) {
    (u.min(v), u.max(v))
}

/// Pairs stubs in shuffled order, re-pairing rejected stubs for a bounded
/// number of rounds. Whatever remains unpaired is dropped.
fn pair_stubs(
    mut stubs: Vec<u32>,
    edges: &mut EdgeSet,
    rng: &mut ChaCha8Rng,
    allowed: impl Fn(u32, u32) -> bool,
) -> usize {
    for _ in 0..PAIRING_ROUNDS {
        if stubs.len() < 2 {
            break;
        }
        stubs.shuffle(rng);
        let mut rest = Vec::new();
        for pair in stubs.chunks(2) {
            match *pair {
                [u, v] if u != v && allowed(u, v) && !edges.contains(&key(u, v)) => {
                    edges.insert(key(u, v));
                }
                [u, v] => rest.extend([u, v]),
                [u] => rest.push(u),
                _ => unreachable!(),
            }
        }
        stubs = rest;
    }
    stubs.len()
}

fn wire(cfg: &SynthConfig, membership: &[Vec<u32>], degrees: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<(u32, u32, f64)>> {
    let mut internal: Vec<Vec<u32>> = vec![Vec::new(); cfg.communities];
    let mut external = Vec::new();
    for (v, (&k, comms)) in degrees.iter().zip(membership).enumerate() {
        let k_in = ((1.0 - cfg.mu) * k as f64).round() as usize;
        for s in 0..k_in {
            // spread internal stubs evenly over the node's communities,
            // starting from a random one
            let c = comms[(s + rng.gen_range(0..comms.len())) % comms.len()];
            internal[c as usize].push(v as u32);
        }
        external.extend(std::iter::repeat(v as u32).take(k - k_in));
    }
    let mut edges = EdgeSet::new();
    let mut dropped = 0;
    let mut total = 0;
    for stubs in internal {
        total += stubs.len();
        dropped += pair_stubs(stubs, &mut edges, rng, |_, _| true);
    }
    total += external.len();
    dropped += pair_stubs(external, &mut edges, rng, |u, v| !shares(&membership[u as usize], &membership[v as usize]));
    if total > 0 && dropped as f64 > 0.1 * total as f64 {
        return Err(Error::Infeasible(format!("{dropped} of {total} stubs could not be paired")));
    }
    if dropped > 0 {
        log::debug!("synthetic graph: dropped {dropped} of {total} stubs");
    }
    let mut out: Vec<(u32, u32, f64)> = edges.into_iter().map(|(u, v)| (u, v, 1.0)).collect();
    out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    Ok(out)
}

/// Indicator block (one column per community) plus `noise_dim` noise
/// columns, all perturbed by Gaussian noise.
fn synth_features(cfg: &SynthConfig, labels: &LabelSet, rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
    let d = cfg.communities + cfg.noise_dim;
    let mut x = Matrix::zeros(cfg.n, d);
    let normal = Normal::new(0.0, cfg.noise).map_err(|e| Error::Input(e.to_string()))?;
    for v in 0..cfg.n {
        let row = x.row_mut(v);
        for &c in labels.of(v) {
            row[c as usize] = 1.0;
        }
        for e in row.iter_mut() {
            *e += normal.sample(rng);
        }
    }
    FeatureMatrix::new(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n: 200,
            avg_degree: 8.0,
            max_degree: 20,
            minc: 40,
            maxc: 80,
            communities: 4,
            overlap_nodes: 50,
            noise_dim: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn structural_invariants() {
        let s = generate(&small()).unwrap();
        assert!(s.graph.is_symmetric());
        assert!((0..200).all(|v| !s.graph.has_edge(v, v)));
        let multi = s.labels.all().iter().filter(|l| l.len() == 2).count();
        assert_eq!(multi, 50);
        assert!(s.labels.all().iter().all(|l| l.len() == 1 || l.len() == 2));
        assert!(s.community_sizes.iter().all(|&c| (40..=80).contains(&c)));
        let mut counted = vec![0; 4];
        for l in s.labels.all() {
            for &c in l {
                counted[c as usize] += 1;
            }
        }
        assert_eq!(counted, s.community_sizes);
        assert_eq!(s.features.dim(), 8);
    }

    #[test]
    fn no_mixing_means_no_inter_edges() {
        let s = generate(&SynthConfig { mu: 0.0, ..small() }).unwrap();
        assert_eq!(s.inter_community_fraction(), 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.features, b.features);
        let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn infeasible_sizes_rejected() {
        let cfg = SynthConfig { minc: 100, maxc: 120, ..small() };
        assert!(matches!(generate(&cfg), Err(Error::Infeasible(_))));
        assert!(generate(&SynthConfig { memberships: 5, ..small() }).is_err());
    }

    #[test]
    fn power_law_mean_bisection() {
        // midpoint-rule quadrature of ∫x·x^-g / ∫x^-g
        let (a, b, g) = (3.0, 50.0, 2.5);
        let steps = 200_000;
        let h = (b - a) / steps as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..steps {
            let x: f64 = a + (i as f64 + 0.5) * h;
            num += x.powf(1.0 - g);
            den += x.powf(-g);
        }
        assert!((power_law_mean(a, b, g) - num / den).abs() < 1e-6);
    }
}
