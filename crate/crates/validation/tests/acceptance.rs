//! One line per acceptance criterion; exits non-zero if any check fails.

use std::collections::BTreeSet;
use std::fs;
use std::time::{Duration, Instant};

use kucnet::exec::Rayon;
use kucnet_core::ckg::{build_ckg, CollaborativeKG, InteractionSet, TripleSet};
use kucnet_core::eval::{
    evaluate, ndcg_at_n, random_recall_band, recall_at_n, ModelScorer, PopularityScorer, PprScorer,
};
use kucnet_core::gradcheck::{grad_check_with, random_ckg, GradCheckConfig};
use kucnet_core::model::{forward, init_params, Activation, ModelConfig, ModelParams};
use kucnet_core::ppr::{
    normalized_adjacency, ppr_all_users, ppr_scores, ppr_step, ColumnStochasticAdjacency, PprStore,
};
use kucnet_core::split::{split_holdout, split_new_item, DatasetSplit};
use kucnet_core::subgraph::{extract_ui_subgraph, layered_expansion, verify_containment, ItemReachSets, Pruning};
use kucnet_core::synthetic::{gen_synthetic, SyntheticConfig, SyntheticData};
use kucnet_core::train::{TrainConfig, Trainer};
use kucnet_validation::{exit_code, Outcome};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (usize, fn(&Rayon) -> (bool, String));

fn main() {
    let exec = Rayon::new(0).expect("thread pool");
    let checks: [Check; 10] = [
        (1, gradients),
        (2, containment),
        (3, equivalence),
        (4, pagerank),
        (5, metrics),
        (6, learning_signal),
        (7, new_items),
        (8, sampling_ablation),
        (9, edge_counts),
        (10, determinism),
    ];
    let mut outcomes = Vec::new();
    for (criterion, check) in checks {
        let t0 = Instant::now();
        let (pass, detail) = check(&exec);
        let o = Outcome {
            criterion,
            pass,
            detail,
            elapsed: t0.elapsed(),
        };
        println!("{o}");
        outcomes.push(o);
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| o.criterion.to_string())
        .collect();
    println!(
        "\nacceptance: {} passed, {} failed{}",
        outcomes.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({})", failed.join(", "))
        }
    );
    std::process::exit(exit_code(&outcomes));
}

fn within(t0: Instant, limit: u64) -> bool {
    t0.elapsed() < Duration::from_secs(limit)
}

fn gradients(_: &Rayon) -> (bool, String) {
    let t0 = Instant::now();
    let seeds = 0..20u64;
    let mut worst = [0.0f64; 2];
    for (slot, activation) in [Activation::Relu, Activation::Identity].into_iter().enumerate() {
        let cfg = GradCheckConfig {
            activation,
            ..GradCheckConfig::default()
        };
        assert_eq!((cfg.dim, cfg.att_dim, cfg.depth, cfg.max_nodes), (4, 3, 3, 20));
        for seed in seeds.clone() {
            let e = grad_check_with(seed, &cfg).expect("gradient check runs");
            worst[slot] = worst[slot].max(e);
        }
    }
    let pass = worst[0] < 1e-4 && worst[1] < 1e-6 && within(t0, 60);
    (
        pass,
        format!(
            "graphs=20 relu_max_rel={:.2e} identity_max_rel={:.2e}",
            worst[0], worst[1]
        ),
    )
}

fn containment(_: &Rayon) -> (bool, String) {
    let t0 = Instant::now();
    let mut violations = 0;
    let mut pairs = 0;
    for seed in 0..50u64 {
        let g = random_ckg(1000 + seed, 40);
        assert!(g.node_count() <= 40);
        let items: Vec<u32> = (0..g.item_count() as u32).collect();
        for depth in 1..=3 {
            for u in 0..g.user_count() as u32 {
                let r = verify_containment(&g, g.user_node(u), depth, &items);
                pairs += r.items_checked;
                violations += r.violations.len();
            }
        }
    }
    let pass = violations == 0 && within(t0, 30);
    (pass, format!("ckgs=50 pairs={pairs} violations={violations}"))
}

fn equivalence(_: &Rayon) -> (bool, String) {
    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut nonzero = 0;
    for seed in 0..30u64 {
        let g = random_ckg(2000 + seed, 30);
        assert!(g.node_count() <= 30);
        let params = init_params(ModelConfig::new(8, 5, 3, g.relation_count()), seed).expect("params");
        for u in 0..g.user_count() as u32 {
            let user = g.user_node(u);
            let all = forward(&layered_expansion(&g, user, 3), &params)
                .expect("forward")
                .item_logits(&g);
            for i in 0..g.item_count() as u32 {
                let item = g.item_node(i);
                let ui = extract_ui_subgraph(&g, user, item, 3).layered(&g);
                let pair = forward(&ui, &params).expect("forward").logit(item);
                worst = worst.max((pair - all[i as usize]).abs());
                pairs += 1;
                nonzero += usize::from(pair != 0.0);
            }
        }
    }
    (
        worst <= 1e-9 && nonzero > 0,
        format!("pairs={pairs} nonzero={nonzero} max_abs_diff={worst:.2e}"),
    )
}

fn pagerank(_: &Rayon) -> (bool, String) {
    // one user, one item, one interaction
    let inter = InteractionSet::new(1, 1, vec![(0, 0)]).expect("pairs");
    let kg = TripleSet::new(1, 1, vec![]).expect("triples");
    let g = build_ckg(&inter, &kg, &[(0, 0)]).expect("ckg");
    assert_eq!(g.node_count(), 2);
    let adj = normalized_adjacency(&g);
    let r = ppr_scores(&adj, 0, 0.15, 20).expect("ppr");
    let err = (r[0] - 0.5405).abs().max((r[1] - 0.4595).abs());
    let two_node = err <= 1e-3;

    let bound = 0.85f64.powi(20);
    let mut worst_max = 0.0f64;
    let mut worst_l1 = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.gen_range(2..60usize);
        let neighbors: Vec<Vec<u32>> = (0..n)
            .map(|j| {
                let d = rng.gen_range(1..=4);
                (0..d)
                    .map(|_| loop {
                        let i = rng.gen_range(0..n as u32);
                        if i as usize != j {
                            break i;
                        }
                    })
                    .collect()
            })
            .collect();
        let adj = ColumnStochasticAdjacency::from_neighbors(&neighbors);
        let source = rng.gen_range(0..n as u32);
        let r = ppr_scores(&adj, source, 0.15, 20).expect("ppr");
        let mut next = vec![0.0; n];
        ppr_step(&adj, &r, source, 0.15, &mut next);
        let diff = r.iter().zip(&next).map(|(a, b)| (a - b).abs());
        worst_max = worst_max.max(diff.clone().fold(0.0, f64::max));
        worst_l1 = worst_l1.max(diff.sum());
    }
    let residual = worst_max <= bound;
    (
        two_node && residual,
        format!(
            "two_node=({:.4}, {:.4}) err={err:.4} tol=1e-3 {}; residual_max={worst_max:.2e} (L1 {worst_l1:.2e}) bound={bound:.2e} {}",
            r[0],
            r[1],
            if two_node { "ok" } else { "exceeded" },
            if residual { "ok" } else { "exceeded" }
        ),
    )
}

fn naive(ranking: &[u32], test: &BTreeSet<u32>, n: usize) -> (f64, f64) {
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in ranking.iter().enumerate().take(n) {
        if test.contains(item) {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..test.len().min(n)).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    (hits as f64 / test.len() as f64, dcg / idcg)
}

fn metrics(_: &Rayon) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(1..80usize);
        let mut ranking: Vec<u32> = (0..m as u32).collect();
        ranking.shuffle(&mut rng);
        ranking.truncate(rng.gen_range(1..=m));
        let size = rng.gen_range(1..=m);
        let test: BTreeSet<u32> = (0..size).map(|_| rng.gen_range(0..m as u32)).collect();
        let n = rng.gen_range(1..30usize);
        let sorted: Vec<u32> = test.iter().copied().collect();
        let (r, d) = naive(&ranking, &test, n);
        let got_r = recall_at_n(&ranking, &sorted, n).expect("non-empty");
        let got_d = ndcg_at_n(&ranking, &sorted, n).expect("non-empty");
        worst = worst.max((r - got_r).abs()).max((d - got_d).abs());
    }
    (worst <= 1e-12, format!("instances=1000 max_abs_diff={worst:.2e}"))
}

fn planted(clusters: usize, noise: f64, per_user: (usize, usize)) -> SyntheticData {
    let mut cfg = SyntheticConfig::new(500, 300, 400, 5, clusters, noise, 1);
    cfg.interactions_per_user = per_user;
    gen_synthetic(&cfg).expect("synthetic data")
}

fn graph_and_scores(data: &SyntheticData, train: &InteractionSet, exec: &Rayon) -> (CollaborativeKG, PprStore) {
    let g = build_ckg(train, &data.kg, &data.alignment).expect("ckg");
    let ppr = ppr_all_users(&g, 0.15, 20, exec).expect("ppr");
    (g, ppr)
}

fn model_recall(
    params: &ModelParams,
    g: &CollaborativeKG,
    ppr: &PprStore,
    pruning: Pruning,
    split: &DatasetSplit,
    exec: &Rayon,
) -> f64 {
    let s = ModelScorer {
        params,
        ckg: g,
        ppr: Some(ppr),
        pruning,
        seed: 0,
    };
    evaluate(&s, &split.train, &split.test, 20, exec)
        .expect("evaluate")
        .mean_recall
}

fn train_config(epochs: usize, pruning: Pruning, seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 16,
        learning_rate: 0.003,
        epochs,
        pruning,
        seed,
        ..TrainConfig::default()
    }
}

fn learning_signal(exec: &Rayon) -> (bool, String) {
    let t0 = Instant::now();
    let data = planted(5, 0.1, (4, 8));
    let split = split_holdout(&data.interactions, 0.2, 7).expect("split");
    let (g, ppr) = graph_and_scores(&data, &split.train, exec);
    let ppr_recall = evaluate(&PprScorer { ckg: &g, ppr: &ppr }, &split.train, &split.test, 20, exec)
        .expect("evaluate")
        .mean_recall;
    let cfg = train_config(8, Pruning::Ppr(35), 0);
    let trainer = Trainer::new(&g, &split.train, Some(&ppr), cfg.clone()).expect("trainer");
    let untrained = model_recall(&trainer.init().expect("init"), &g, &ppr, cfg.pruning, &split, exec);
    let out = trainer.train(None, exec).expect("training");
    let trained = model_recall(&out.params, &g, &ppr, cfg.pruning, &split, exec);
    let pass = trained >= 1.2 * ppr_recall && trained >= 1.2 * untrained && within(t0, 600);
    (
        pass,
        format!(
            "recall@20 trained={trained:.4} ppr={ppr_recall:.4} untrained={untrained:.4} ratio_vs_ppr={:.2} ratio_vs_untrained={:.2}",
            trained / ppr_recall,
            trained / untrained
        ),
    )
}

fn new_items(exec: &Rayon) -> (bool, String) {
    let data = planted(15, 0.0, (18, 26));
    let outer = split_new_item(&data.interactions, 5, 7).expect("split").remove(0);
    let inner = split_new_item(&outer.train, 5, 8).expect("split").remove(0);
    let (g, ppr) = graph_and_scores(&data, &inner.train, exec);
    let cfg = train_config(8, Pruning::Ppr(35), 0);
    let trainer = Trainer::new(&g, &inner.train, Some(&ppr), cfg.clone()).expect("trainer");
    let out = trainer.train(Some(&inner.test), exec).expect("training");
    let trained = model_recall(&out.params, &g, &ppr, cfg.pruning, &outer, exec);
    let (mean, sd) = random_recall_band(&outer.train, &outer.test, data.interactions.item_count(), 20);
    let pop = PopularityScorer::new(&outer.train, data.interactions.item_count());
    let popularity = evaluate(&pop, &outer.train, &outer.test, 20, exec)
        .expect("evaluate")
        .mean_recall;
    let pass = trained > 0.0 && trained >= mean + 5.0 * sd && popularity < 0.01;
    (
        pass,
        format!(
            "new-item recall@20 trained={trained:.4} random={mean:.4}+-{sd:.4} (z={:.1}) popularity={popularity:.4} best_epoch={}",
            (trained - mean) / sd,
            out.best_epoch
        ),
    )
}

fn sampling_ablation(exec: &Rayon) -> (bool, String) {
    let data = planted(5, 0.1, (4, 8));
    let split = split_holdout(&data.interactions, 0.2, 7).expect("split");
    let (g, ppr) = graph_and_scores(&data, &split.train, exec);
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in 0..3u64 {
        let mut r = [0.0; 2];
        for (slot, pruning) in [Pruning::Ppr(10), Pruning::Random(10)].into_iter().enumerate() {
            let cfg = train_config(8, pruning, seed);
            let out = Trainer::new(&g, &split.train, Some(&ppr), cfg)
                .expect("trainer")
                .train(None, exec)
                .expect("training");
            r[slot] = model_recall(&out.params, &g, &ppr, pruning, &split, exec);
        }
        wins += usize::from(r[0] >= r[1]);
        rows.push(format!("seed{seed} ppr={:.4} random={:.4}", r[0], r[1]));
    }
    (wins >= 2, format!("K=10 {} ppr_wins={wins}/3", rows.join(" ")))
}

fn edge_counts(_: &Rayon) -> (bool, String) {
    let data = planted(5, 0.1, (4, 8));
    let split = split_holdout(&data.interactions, 0.2, 7).expect("split");
    let g = build_ckg(&split.train, &data.kg, &data.alignment).expect("ckg");
    let reach = ItemReachSets::new(&g, 3);
    let mut worst = f64::INFINITY;
    let mut total = (0usize, 0usize);
    let mut holds = 0;
    for u in 0..g.user_count() as u32 {
        let lg = layered_expansion(&g, g.user_node(u), 3);
        let user_centric = lg.edge_count();
        let pairs: usize = reach.pair_edge_counts(&lg, g.node_count()).iter().sum();
        holds += usize::from(user_centric < pairs);
        worst = worst.min(pairs as f64 / user_centric as f64);
        total.0 += user_centric;
        total.1 += pairs;
    }
    (
        holds == g.user_count(),
        format!(
            "users={} holds={holds} mean_edges user_centric={:.0} sum_ui={:.0} ratio={:.1} min_ratio={worst:.1}",
            g.user_count(),
            total.0 as f64 / g.user_count() as f64,
            total.1 as f64 / g.user_count() as f64,
            total.1 as f64 / total.0 as f64
        ),
    )
}

fn determinism(_: &Rayon) -> (bool, String) {
    let tmp = tempfile::tempdir().expect("temp dir");
    let path = |name: &str| tmp.path().join(name).to_str().expect("utf-8 path").to_owned();
    let run = |args: &[&str]| {
        let mut full = vec!["kucnet"];
        full.extend_from_slice(args);
        kucnet::cli::run_from(full).expect("command succeeds")
    };
    let data = path("data");
    run(&["gen-synthetic", "--out", &data]);
    let mut files = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "4")] {
        let out = path(out);
        run(&[
            "--threads",
            threads,
            "train",
            "--data",
            &data,
            "--out",
            &out,
            "--epochs",
            "2",
            "--d",
            "16",
            "--lr",
            "0.003",
        ]);
        run(&["--threads", threads, "evaluate", "--data", &data, "--out", &out]);
        let dir = tmp.path().join(&out);
        files.push(
            [kucnet::cli::EVAL_SUMMARY_FILE, kucnet::cli::EVAL_USERS_FILE]
                .map(|f| fs::read(dir.join(f)).expect("report")),
        );
    }
    let same = files[0] == files[1];
    let summary = String::from_utf8_lossy(&files[0][0]).trim().to_owned();
    (same, format!("identical={same} summary={summary}"))
}
