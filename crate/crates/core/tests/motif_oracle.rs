mod common;

use common::{brute_force_cooccurrence, brute_force_instances, random_graph};
use fsgcl::motif::{cooccurrence, enumerate_instances, nonzero_mask, MotifPattern};
use fsgcl::SparseGraph;
use proptest::prelude::*;

fn check_against_oracle(g: &SparseGraph, p: &MotifPattern) {
    let oracle = brute_force_instances(g, p.node_count(), p.edges());
    let got = enumerate_instances(g, p);
    assert_eq!(got.len(), oracle.len(), "instance count for {}", p.name());
    for (i, (tuple, pairs)) in oracle.iter().enumerate() {
        assert_eq!(got.tuple(i), tuple.as_slice());
        assert_eq!(&got.matched_pairs(i), pairs, "matched pairs of {tuple:?}");
    }
    let o = cooccurrence(&got, g);
    let expect = brute_force_cooccurrence(g.n(), &oracle);
    assert_eq!(o.graph().to_dense(), expect);
    assert!(o.graph().is_symmetric());
    let r = nonzero_mask(&o);
    assert_eq!(r.nnz(), o.graph().nnz());
}

#[test]
fn k4_triangle_cooccurrence_is_two_everywhere() {
    let g = random_graph(4, 1.1, 0);
    let o = cooccurrence(&enumerate_instances(&g, &MotifPattern::triangle()), &g);
    assert_eq!(o.graph().nnz(), 12);
    for u in 0..4 {
        for v in 0..4 {
            if u != v {
                assert_eq!(o.count(u, v), 2);
            }
        }
    }
}

#[test]
fn extra_patterns_match_oracle() {
    let star = MotifPattern::builtin("4-star").unwrap();
    let path = MotifPattern::builtin("3-path").unwrap();
    let house = MotifPattern::new("house", 5, vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)]).unwrap();
    for seed in 0..6 {
        let g = random_graph(11, 0.35, seed);
        check_against_oracle(&g, &star);
        check_against_oracle(&g, &path);
        check_against_oracle(&g, &house);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn enumeration_matches_brute_force(n in 0usize..14, p in 0.0f64..0.8, seed in any::<u64>()) {
        let g = random_graph(n, p, seed);
        for pat in MotifPattern::defaults() {
            check_against_oracle(&g, &pat);
        }
    }

    #[test]
    fn adding_an_edge_never_decreases_counts(n in 4usize..14, p in 0.1f64..0.6, seed in any::<u64>(), extra in any::<(u32, u32)>()) {
        let g = random_graph(n, p, seed);
        let (u, v) = (extra.0 % n as u32, extra.1 % n as u32);
        let mut edges: Vec<_> = g.undirected_edges().map(|(a, b, w)| (a as u32, b as u32, w)).collect();
        edges.push((u, v, 1.0));
        let g2 = SparseGraph::from_undirected_edges(n, &edges).unwrap();
        for pat in MotifPattern::defaults() {
            prop_assert!(enumerate_instances(&g2, &pat).len() >= enumerate_instances(&g, &pat).len());
        }
    }
}
