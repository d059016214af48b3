use std::collections::BTreeSet;

use kucnet_core::eval::{ndcg_at_n, rank_items, recall_at_n};
use kucnet_core::train::bpr_loss;
use proptest::prelude::*;

fn naive_metrics(scores: &[f64], exclude: &BTreeSet<u32>, test: &BTreeSet<u32>, n: usize) -> (f64, f64) {
    let mut order: Vec<u32> = (0..scores.len() as u32).filter(|i| !exclude.contains(i)).collect();
    // insertion sort on (score desc, id asc)
    for a in 1..order.len() {
        let mut b = a;
        while b > 0 {
            let (x, y) = (order[b - 1], order[b]);
            let swap = scores[y as usize] > scores[x as usize] || (scores[y as usize] == scores[x as usize] && y < x);
            if !swap {
                break;
            }
            order.swap(b - 1, b);
            b -= 1;
        }
    }
    let top = &order[..n.min(order.len())];
    let hits = top.iter().filter(|i| test.contains(i)).count();
    let mut dcg = 0.0;
    for (r, i) in top.iter().enumerate() {
        if test.contains(i) {
            dcg += 1.0 / ((r + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for r in 0..test.len().min(n) {
        idcg += 1.0 / ((r + 2) as f64).log2();
    }
    (hits as f64 / test.len() as f64, dcg / idcg)
}

fn instance() -> impl Strategy<Value = (Vec<f64>, BTreeSet<u32>, BTreeSet<u32>, usize)> {
    (5usize..60).prop_flat_map(|m| {
        (
            prop::collection::vec(prop_oneof![(-3i32..3).prop_map(f64::from), -5.0f64..5.0], m),
            prop::collection::btree_set(0..m as u32, 0..m / 3),
            prop::collection::btree_set(0..m as u32, 1..m / 2 + 1),
            1usize..25,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metrics_match_naive_reference((scores, exclude, test, n) in instance()) {
        let test: BTreeSet<u32> = test.difference(&exclude).copied().collect();
        prop_assume!(!test.is_empty());
        let ex: Vec<u32> = exclude.iter().copied().collect();
        let t: Vec<u32> = test.iter().copied().collect();
        let ranked = rank_items(&scores, &ex, None);
        let r = recall_at_n(&ranked, &t, n).unwrap();
        let g = ndcg_at_n(&ranked, &t, n).unwrap();
        let (nr, ng) = naive_metrics(&scores, &exclude, &test, n);
        prop_assert!((r - nr).abs() < 1e-12);
        prop_assert!((g - ng).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&g));
    }

    #[test]
    fn metrics_survive_affine_transform((scores, exclude, test, n) in instance()) {
        let ex: Vec<u32> = exclude.iter().copied().collect();
        let t: Vec<u32> = test.iter().copied().collect();
        let moved: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
        let a = rank_items(&scores, &ex, None);
        let b = rank_items(&moved, &ex, None);
        prop_assert_eq!(recall_at_n(&a, &t, n), recall_at_n(&b, &t, n));
        prop_assert_eq!(ndcg_at_n(&a, &t, n), ndcg_at_n(&b, &t, n));
    }

    #[test]
    fn ndcg_is_one_iff_hits_fill_the_top((scores, _ex, test, n) in instance()) {
        let t: Vec<u32> = test.iter().copied().collect();
        let ranked = rank_items(&scores, &[], None);
        let g = ndcg_at_n(&ranked, &t, n).unwrap();
        let k = t.len().min(n);
        let top_full = ranked[..k].iter().all(|i| test.contains(i));
        prop_assert_eq!((g - 1.0).abs() < 1e-12, top_full);
    }

    #[test]
    fn bpr_loss_is_positive(pos in -50.0f64..50.0, neg in -50.0f64..50.0) {
        let (l, dp, dn) = bpr_loss(pos, neg);
        prop_assert!(l > 0.0);
        prop_assert_eq!(dp, -dn);
    }
}

#[test]
fn bpr_loss_vanishes_with_margin() {
    let mut prev = f64::INFINITY;
    for m in [1.0, 5.0, 10.0, 20.0, 30.0] {
        let l = bpr_loss(m, 0.0).0;
        assert!(l > 0.0 && l < prev);
        prev = l;
    }
    assert!(prev < 1e-12);
}
