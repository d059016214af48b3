//! All-ranking evaluation: every item except the user's training positives is
//! ranked, and recall@N / ndcg@N are averaged over users with test items.

use alloc::vec;
use alloc::vec::Vec;

use crate::ckg::{CollaborativeKG, InteractionSet};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{forward, ModelParams};
use crate::ppr::PprStore;
use crate::rng;
use crate::subgraph::{user_graph, LayeredGraph, Pruning};

/// Scores every item for a user; higher is better.
pub trait Scorer: Sync {
    fn item_count(&self) -> usize;

    /// One score per item id.
    fn scores(&self, user: u32) -> Result<Vec<f64>>;
}

/// Scores from one forward pass over the user's pruned computation graph.
/// Items outside the last layer score 0.
#[derive(Debug, Clone, Copy)]
pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
    pub ckg: &'a CollaborativeKG,
    pub ppr: Option<&'a PprStore>,
    pub pruning: Pruning,
    /// Seeds the per-user streams of random pruning.
    pub seed: u64,
}

impl Scorer for ModelScorer<'_> {
    fn item_count(&self) -> usize {
        self.ckg.item_count()
    }

    fn scores(&self, user: u32) -> Result<Vec<f64>> {
        let graph = self.graph(user)?;
        let tape = forward(&graph, self.params)?;
        Ok(tape.item_logits(self.ckg))
    }
}

impl ModelScorer<'_> {
    /// The pruned computation graph the scores of `user` come from.
    pub fn graph(&self, user: u32) -> Result<LayeredGraph> {
        let scores = self.ppr.map(|p| p.scores(user));
        let rng = rng::stream(self.seed, &[0x4556, user as u64]);
        user_graph(self.ckg, user, self.params.config.depth, self.pruning, scores, &[], rng)
    }

    /// Ranked candidate items for a user, training positives removed.
    pub fn rank(&self, user: u32, train_positives: &[u32], candidates: Option<&[u32]>) -> Result<Vec<u32>> {
        Ok(rank_items(&self.scores(user)?, train_positives, candidates))
    }
}

/// Ranks items by the user's PageRank score of their nodes.
#[derive(Debug, Clone, Copy)]
pub struct PprScorer<'a> {
    pub ckg: &'a CollaborativeKG,
    pub ppr: &'a PprStore,
}

impl Scorer for PprScorer<'_> {
    fn item_count(&self) -> usize {
        self.ckg.item_count()
    }

    fn scores(&self, user: u32) -> Result<Vec<f64>> {
        let s = self.ppr.scores(user);
        Ok((0..self.ckg.item_count() as u32)
            .map(|i| s[self.ckg.item_node(i) as usize])
            .collect())
    }
}

/// Ranks items by their number of training interactions.
#[derive(Debug, Clone)]
pub struct PopularityScorer {
    counts: Vec<f64>,
}

impl PopularityScorer {
    pub fn new(train: &InteractionSet, item_count: usize) -> Self {
        let mut counts = vec![0.0; item_count];
        for &(_, i) in train.pairs() {
            counts[i as usize] += 1.0;
        }
        Self { counts }
    }
}

impl Scorer for PopularityScorer {
    fn item_count(&self) -> usize {
        self.counts.len()
    }

    fn scores(&self, _user: u32) -> Result<Vec<f64>> {
        Ok(self.counts.clone())
    }
}

/// Candidate items sorted by score descending, then item id ascending.
///
/// `exclude` must be sorted. `candidates` defaults to every item.
pub fn rank_items(scores: &[f64], exclude: &[u32], candidates: Option<&[u32]>) -> Vec<u32> {
    let mut items: Vec<u32> = match candidates {
        Some(c) => c.to_vec(),
        None => (0..scores.len() as u32).collect(),
    };
    items.retain(|i| exclude.binary_search(i).is_err());
    items.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    items
}

/// `|top-N ∩ T| / |T|`; `None` for an empty test set.
pub fn recall_at_n(ranked: &[u32], test: &[u32], n: usize) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let hits = hits(ranked, test, n).count();
    Some(hits as f64 / test.len() as f64)
}

/// DCG of the top-N hits over the ideal DCG of `min(|T|, N)` hits; `None`
/// for an empty test set. `test` must be sorted.
pub fn ndcg_at_n(ranked: &[u32], test: &[u32], n: usize) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let dcg = hits(ranked, test, n).map(discount).fold(0.0, |a, b| a + b);
    let ideal = (0..test.len().min(n)).map(discount).fold(0.0, |a, b| a + b);
    Some(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}

/// `1 / log2(rank + 2)` for a 0-based rank.
fn discount(rank: usize) -> f64 {
    1.0 / libm::log2(rank as f64 + 2.0)
}

/// 0-based ranks within the top `n` whose item is in `test` (sorted).
fn hits<'a>(ranked: &'a [u32], test: &'a [u32], n: usize) -> impl Iterator<Item = usize> + 'a {
    ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(move |(_, i)| test.binary_search(i).is_ok())
        .map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: u32,
    pub recall: f64,
    pub ndcg: f64,
    /// Top-N recommendations.
    pub ranked: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub per_user: Vec<UserMetrics>,
    pub mean_recall: f64,
    pub mean_ndcg: f64,
}

impl EvalReport {
    pub fn users_evaluated(&self) -> usize {
        self.per_user.len()
    }
}

/// Ranks all items for every user with test items and averages the metrics.
///
/// Only training pairs are read while ranking; test pairs are used for
/// scoring the ranked lists.
pub fn evaluate<S: Scorer, E: Executor>(
    scorer: &S,
    train: &InteractionSet,
    test: &InteractionSet,
    n: usize,
    exec: &E,
) -> Result<EvalReport> {
    let mut train_pos = train.items_by_user();
    let mut test_pos = test.items_by_user();
    let users = train_pos.len().max(test_pos.len());
    train_pos.resize(users, Vec::new());
    test_pos.resize(users, Vec::new());
    let evaluated: Vec<u32> = (0..users as u32)
        .filter(|&u| !test_pos[u as usize].is_empty())
        .collect();
    if evaluated.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let results = exec.map(evaluated.len(), |k| -> Result<UserMetrics> {
        let u = evaluated[k];
        let scores = scorer.scores(u)?;
        let mut ranked = rank_items(&scores, &train_pos[u as usize], None);
        ranked.truncate(n);
        let t = &test_pos[u as usize];
        Ok(UserMetrics {
            user: u,
            recall: recall_at_n(&ranked, t, n).expect("non-empty test set"),
            ndcg: ndcg_at_n(&ranked, t, n).expect("non-empty test set"),
            ranked,
        })
    });
    let per_user = results.into_iter().collect::<Result<Vec<_>>>()?;
    let count = per_user.len() as f64;
    let mean_recall = per_user.iter().map(|m| m.recall).sum::<f64>() / count;
    let mean_ndcg = per_user.iter().map(|m| m.ndcg).sum::<f64>() / count;
    Ok(EvalReport {
        n,
        per_user,
        mean_recall,
        mean_ndcg,
    })
}

/// Mean and standard deviation of mean recall@N under uniformly random
/// ranking of each user's candidates (all items minus training positives).
///
/// Hits per user follow a hypergeometric law: `N` draws from `C` candidates
/// of which `|T|` are relevant.
pub fn random_recall_band(train: &InteractionSet, test: &InteractionSet, item_count: usize, n: usize) -> (f64, f64) {
    let train_pos = train.items_by_user();
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut users = 0usize;
    for (u, t) in test.items_by_user().iter().enumerate() {
        if t.is_empty() {
            continue;
        }
        let seen = train_pos.get(u).map_or(0, Vec::len);
        let c = (item_count - seen) as f64;
        let k = t.len() as f64;
        let draws = (n as f64).min(c);
        let p = k / c;
        let hits_var = if c > 1.0 {
            draws * p * (1.0 - p) * (c - draws) / (c - 1.0)
        } else {
            0.0
        };
        mean += draws * p / k;
        var += hits_var / (k * k);
        users += 1;
    }
    if users == 0 {
        return (0.0, 0.0);
    }
    let m = users as f64;
    (mean / m, libm::sqrt(var) / m)
}
