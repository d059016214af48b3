use std::collections::BTreeSet;

use kucnet_core::ckg::{build_ckg, InteractionSet, TripleSet};
use kucnet_core::gradcheck::random_ckg;
use kucnet_core::ppr::{normalized_adjacency, ppr_scores, ColumnStochasticAdjacency};
use kucnet_core::split::{split_holdout, split_new_item, split_new_user};
use kucnet_core::subgraph::{layered_expansion, prune_topk, verify_containment};
use proptest::prelude::*;

fn edge_set(g: &kucnet_core::subgraph::LayeredGraph) -> Vec<BTreeSet<(u32, u32, u32)>> {
    g.edge_layers().into_iter().map(|l| l.into_iter().collect()).collect()
}

fn scores_for(n: usize, seed: u64) -> Vec<f64> {
    // coarse values so ties are common
    (0..n as u64)
        .map(|k| ((k.wrapping_mul(2654435761) ^ seed) % 5) as f64)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ckg_is_reverse_closed(seed in any::<u64>()) {
        let g = random_ckg(seed, 30);
        for (h, r, t) in g.edges() {
            prop_assert!(g.contains_edge(t, g.reverse_relation(r), h));
        }
        prop_assert!(g.is_reverse_closed());
    }

    #[test]
    fn node_ids_round_trip(seed in any::<u64>()) {
        let g = random_ckg(seed, 30);
        for n in 0..g.node_count() as u32 {
            prop_assert_eq!(g.global(g.node_kind(n)), n);
        }
    }

    #[test]
    fn prune_is_sub_and_idempotent(seed in any::<u64>(), k in 1usize..5) {
        let g = random_ckg(seed, 30);
        let full = layered_expansion(&g, 0, 3);
        let s = scores_for(g.node_count(), seed);
        let once = prune_topk(&full, &s, k);
        prop_assert!(once.is_sub_of(&full));
        prop_assert_eq!(prune_topk(&once, &s, k), once);
    }

    #[test]
    fn prune_with_large_k_is_identity(seed in any::<u64>()) {
        let g = random_ckg(seed, 30);
        let full = layered_expansion(&g, 0, 3);
        let max_deg = (0..g.node_count() as u32).map(|n| g.out_degree(n)).max().unwrap_or(0);
        let s = scores_for(g.node_count(), seed);
        prop_assert_eq!(prune_topk(&full, &s, max_deg), full);
    }

    #[test]
    fn prune_is_monotone_in_k(seed in any::<u64>(), k1 in 1usize..4, extra in 0usize..4) {
        let g = random_ckg(seed, 30);
        let full = layered_expansion(&g, 0, 3);
        let s = scores_for(g.node_count(), seed);
        let small = edge_set(&prune_topk(&full, &s, k1));
        let large = edge_set(&prune_topk(&full, &s, k1 + extra));
        for (a, b) in small.iter().zip(&large) {
            prop_assert!(a.is_subset(b));
        }
    }

    #[test]
    fn pair_paths_lie_in_user_layers(seed in any::<u64>(), depth in 1usize..4) {
        let g = random_ckg(seed, 25);
        let items: Vec<u32> = (0..g.item_count() as u32).collect();
        for u in 0..g.user_count() as u32 {
            let report = verify_containment(&g, u, depth, &items);
            prop_assert!(report.violations.is_empty(), "{:?}", report.violations);
        }
    }

    #[test]
    fn ppr_deltas_shrink(seed in any::<u64>()) {
        let g = random_ckg(seed, 30);
        let adj = normalized_adjacency(&g);
        let mut prev: Option<Vec<f64>> = None;
        let mut last_delta = f64::INFINITY;
        for it in 0..25 {
            let r = ppr_scores(&adj, 0, 0.15, it).unwrap();
            if let Some(p) = &prev {
                let d: f64 = r.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
                prop_assert!(d <= 0.85 * last_delta + 1e-12, "{d} after {last_delta}");
                last_delta = d;
            }
            prev = Some(r);
        }
    }

    #[test]
    fn splits_keep_their_invariants(seed in any::<u64>(), folds in 2usize..6) {
        let g = random_ckg(seed, 30);
        let pairs: Vec<(u32, u32)> = g
            .edges()
            .filter(|&(h, r, _)| r == 0 && (h as usize) < g.user_count())
            .map(|(h, _, t)| (h, g.node_item(t).unwrap()))
            .collect();
        let inter = InteractionSet::new(g.user_count(), g.item_count(), pairs).unwrap();
        for s in split_new_item(&inter, folds.min(g.item_count()), seed).unwrap() {
            s.check().unwrap();
            prop_assert_eq!(s.train.len() + s.test.len(), inter.len());
        }
        for s in split_new_user(&inter, folds.min(g.user_count()), seed).unwrap() {
            s.check().unwrap();
            prop_assert_eq!(s.train.len() + s.test.len(), inter.len());
        }
        let s = split_holdout(&inter, 0.3, seed).unwrap();
        s.check().unwrap();
    }
}

#[test]
fn ppr_symmetric_on_four_cycle() {
    let neighbors = vec![vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2]];
    let adj = ColumnStochasticAdjacency::from_neighbors(&neighbors);
    let r = ppr_scores(&adj, 0, 0.15, 20).unwrap();
    assert!((r[1] - r[3]).abs() < 1e-9);
    assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn ckg_from_files_shape() {
    // 2 users, 2 items, item 1 aligned to entity 2, entity 0 unaligned
    let inter = InteractionSet::new(2, 2, vec![(0, 0), (1, 1), (1, 1)]).unwrap();
    let kg = TripleSet::new(3, 1, vec![(2, 0, 0), (1, 0, 2)]).unwrap();
    let g = build_ckg(&inter, &kg, &[(0, 1), (1, 2)]).unwrap();
    assert_eq!(g.node_count(), 5);
    assert_eq!(g.relation_count(), 4);
    assert!(g.is_reverse_closed());
    // interactions deduplicated: 2 pairs and 2 triples, each with a reverse
    assert_eq!(g.edge_count(), 8);
}
