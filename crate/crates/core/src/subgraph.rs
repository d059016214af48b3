//! User-centric layered computation graphs, their PageRank top-K pruning, and
//! the per-pair user-item subgraphs used as correctness oracles.
//!
//! A [`LayeredGraph`] for user `u` and depth `L` holds node layers
//! `V^0 = {u}, V^1, ..., V^L` and edge layers `E^1, ..., E^L`, where `E^l`
//! holds edges whose head lies in `V^(l-1)` and `V^l` is exactly the set of
//! tails of `E^l`. Every edge also stores the positions of its head and tail
//! inside their node layers so message passing is a flat gather/scatter.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use crate::ckg::{CollaborativeKG, INTERACT};
use crate::error::{Error, Result};

/// Edges of one layer as parallel arrays.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeLayer {
    pub heads: Vec<u32>,
    pub rels: Vec<u32>,
    pub tails: Vec<u32>,
    /// Position of each head in the previous node layer.
    pub head_pos: Vec<u32>,
    /// Position of each tail in this layer's node list.
    pub tail_pos: Vec<u32>,
}

impl EdgeLayer {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn edge(&self, k: usize) -> (u32, u32, u32) {
        (self.heads[k], self.rels[k], self.tails[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.len()).map(move |k| self.edge(k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredGraph {
    user: u32,
    nodes: Vec<Vec<u32>>,
    edges: Vec<EdgeLayer>,
}

impl LayeredGraph {
    /// Assembles a layered graph from per-layer edge lists, keeping edge order.
    ///
    /// Fails if an edge's head is not a tail of the previous layer.
    pub fn from_edge_layers(user: u32, layers: Vec<Vec<(u32, u32, u32)>>) -> Result<Self> {
        let mut nodes = vec![vec![user]];
        let mut edges = Vec::with_capacity(layers.len());
        for (l, layer) in layers.into_iter().enumerate() {
            let prev = &nodes[l];
            let mut tails: Vec<u32> = layer.iter().map(|e| e.2).collect();
            tails.sort_unstable();
            tails.dedup();
            let mut out = EdgeLayer::default();
            for (h, r, t) in layer {
                let hp = prev
                    .binary_search(&h)
                    .map_err(|_| Error::Contract(format!("layer {} edge head {h} not in previous layer", l + 1)))?;
                let tp = tails.binary_search(&t).expect("tail collected above");
                out.heads.push(h);
                out.rels.push(r);
                out.tails.push(t);
                out.head_pos.push(hp as u32);
                out.tail_pos.push(tp as u32);
            }
            edges.push(out);
            nodes.push(tails);
        }
        Ok(Self { user, nodes, edges })
    }

    pub fn user(&self) -> u32 {
        self.user
    }

    /// Number of edge layers `L`.
    pub fn depth(&self) -> usize {
        self.edges.len()
    }

    /// Sorted node layer `V^l`, `l` in `0..=L`.
    pub fn nodes(&self, l: usize) -> &[u32] {
        &self.nodes[l]
    }

    /// Edge layer `E^l`, `l` in `1..=L`.
    pub fn edges(&self, l: usize) -> &EdgeLayer {
        &self.edges[l - 1]
    }

    /// Position of `node` in `V^l`.
    pub fn position(&self, l: usize, node: u32) -> Option<usize> {
        self.nodes[l].binary_search(&node).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(EdgeLayer::len).sum()
    }

    /// Per-layer edge lists as triples.
    pub fn edge_layers(&self) -> Vec<Vec<(u32, u32, u32)>> {
        self.edges.iter().map(|e| e.iter().collect()).collect()
    }

    /// Whether every layer's edges are a subset of `other`'s.
    pub fn is_sub_of(&self, other: &LayeredGraph) -> bool {
        self.depth() == other.depth()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| {
                let set: BTreeSet<_> = b.iter().collect();
                a.iter().all(|e| set.contains(&e))
            })
    }
}

/// Chooses which outgoing edges of a head survive.
///
/// Candidates arrive sorted by `(tail, relation)`; the selector removes the
/// edges it drops and must leave the survivors in that order.
pub trait EdgeSelector {
    fn select(&mut self, head: u32, candidates: &mut Vec<(u32, u32)>);
}

/// Keeps every edge.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeepAll;

impl EdgeSelector for KeepAll {
    fn select(&mut self, _head: u32, _candidates: &mut Vec<(u32, u32)>) {}
}

/// Keeps the `k` edges whose tails score highest, ties broken by
/// `(tail, relation)` ascending.
#[derive(Debug, Clone, Copy)]
pub struct TopK<'a> {
    pub scores: &'a [f64],
    pub k: usize,
}

impl EdgeSelector for TopK<'_> {
    fn select(&mut self, _head: u32, candidates: &mut Vec<(u32, u32)>) {
        if candidates.len() <= self.k {
            return;
        }
        let scores = self.scores;
        // candidates are (rel, tail)
        candidates.sort_by(|a, b| {
            scores[b.1 as usize]
                .total_cmp(&scores[a.1 as usize])
                .then(a.1.cmp(&b.1))
                .then(a.0.cmp(&b.0))
        });
        candidates.truncate(self.k);
        candidates.sort_unstable_by_key(|c| (c.1, c.0));
    }
}

/// Keeps `k` edges per head uniformly at random.
#[derive(Debug)]
pub struct RandomK<R> {
    pub rng: R,
    pub k: usize,
}

impl<R: Rng> EdgeSelector for RandomK<R> {
    fn select(&mut self, _head: u32, candidates: &mut Vec<(u32, u32)>) {
        if candidates.len() <= self.k {
            return;
        }
        let mut picked = sample(&mut self.rng, candidates.len(), self.k).into_vec();
        picked.sort_unstable();
        let kept: Vec<_> = picked.into_iter().map(|p| candidates[p]).collect();
        *candidates = kept;
    }
}

/// Frontier expansion from `user` for `depth` layers.
///
/// `keep(head, rel, tail)` hides edges from the graph; `selector` prunes each
/// head's surviving edges. Layer `l` expands only the (pruned) `V^(l-1)`.
pub fn expand<F, S>(ckg: &CollaborativeKG, user: u32, depth: usize, keep: F, selector: &mut S) -> LayeredGraph
where
    F: Fn(u32, u32, u32) -> bool,
    S: EdgeSelector + ?Sized,
{
    let mut nodes = vec![vec![user]];
    let mut edges = Vec::with_capacity(depth);
    let mut candidates: Vec<(u32, u32)> = Vec::new();
    for l in 1..=depth {
        let prev = &nodes[l - 1];
        let mut layer = EdgeLayer::default();
        for (hp, &h) in prev.iter().enumerate() {
            let (rels, tails) = ckg.edges_of(h);
            candidates.clear();
            candidates.extend(
                rels.iter()
                    .zip(tails)
                    .map(|(&r, &t)| (r, t))
                    .filter(|&(r, t)| keep(h, r, t)),
            );
            selector.select(h, &mut candidates);
            for &(r, t) in &candidates {
                layer.heads.push(h);
                layer.rels.push(r);
                layer.tails.push(t);
                layer.head_pos.push(hp as u32);
            }
        }
        let mut tails = layer.tails.clone();
        tails.sort_unstable();
        tails.dedup();
        layer.tail_pos = layer
            .tails
            .iter()
            .map(|t| tails.binary_search(t).expect("tail collected above") as u32)
            .collect();
        edges.push(layer);
        nodes.push(tails);
    }
    LayeredGraph { user, nodes, edges }
}

/// Unpruned user-centric computation graph.
pub fn layered_expansion(ckg: &CollaborativeKG, user: u32, depth: usize) -> LayeredGraph {
    expand(ckg, user, depth, |_, _, _| true, &mut KeepAll)
}

/// Re-applies a selector to an existing layered graph, layer by layer.
///
/// Edges whose head no longer survives in the previous layer are dropped
/// before selection, so the result matches expanding with the selector.
pub fn prune_with<S: EdgeSelector + ?Sized>(graph: &LayeredGraph, selector: &mut S) -> LayeredGraph {
    let mut layers = Vec::with_capacity(graph.depth());
    let mut alive: BTreeSet<u32> = [graph.user].into_iter().collect();
    for l in 1..=graph.depth() {
        let mut groups: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
        for (h, r, t) in graph.edges(l).iter() {
            if alive.contains(&h) {
                groups.entry(h).or_default().push((r, t));
            }
        }
        let mut layer = Vec::new();
        for (h, mut cands) in groups {
            cands.sort_unstable_by_key(|c| (c.1, c.0));
            selector.select(h, &mut cands);
            layer.extend(cands.into_iter().map(|(r, t)| (h, r, t)));
        }
        alive = layer.iter().map(|e| e.2).collect();
        layers.push(layer);
    }
    LayeredGraph::from_edge_layers(graph.user, layers).expect("heads drawn from surviving tails")
}

/// Keeps the top-`k` edges per head by tail PageRank score.
pub fn prune_topk(graph: &LayeredGraph, scores: &[f64], k: usize) -> LayeredGraph {
    prune_with(graph, &mut TopK { scores, k })
}

/// Filter that hides `(user, interact, item)` edges and their reverses for the
/// given items.
pub fn exclude_interactions<'a>(
    ckg: &'a CollaborativeKG,
    user: u32,
    items: &'a [u32],
) -> impl Fn(u32, u32, u32) -> bool + 'a {
    let rev = ckg.reverse_relation(INTERACT);
    move |h, r, t| {
        if r == INTERACT && h == user {
            items.binary_search(&t).is_err()
        } else if r == rev && t == user {
            items.binary_search(&h).is_err()
        } else {
            true
        }
    }
}

/// Neighbourhood selection applied while expanding a user's graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pruning {
    /// Keep every edge.
    None,
    /// Top-`k` edges per head by the user's PageRank score of the tail.
    Ppr(usize),
    /// `k` uniformly random edges per head.
    Random(usize),
}

/// Builds the (pruned) computation graph of `user`.
///
/// `scores` is the user's PageRank vector and is only read for
/// [`Pruning::Ppr`]; `hidden_items` lists items whose interaction edges with
/// the user are hidden; `rng` drives [`Pruning::Random`].
pub fn user_graph<R: Rng>(
    ckg: &CollaborativeKG,
    user: u32,
    depth: usize,
    pruning: Pruning,
    scores: Option<&[f64]>,
    hidden_items: &[u32],
    rng: R,
) -> Result<LayeredGraph> {
    let hidden: Vec<u32> = hidden_items.iter().map(|&i| ckg.item_node(i)).collect();
    let keep = exclude_interactions(ckg, user, &hidden);
    Ok(match pruning {
        Pruning::None => expand(ckg, user, depth, keep, &mut KeepAll),
        Pruning::Ppr(k) => {
            let scores = scores.ok_or_else(|| Error::Config("PageRank pruning needs scores".into()))?;
            if scores.len() != ckg.node_count() {
                return Err(Error::Config(format!(
                    "{} scores for {} nodes",
                    scores.len(),
                    ckg.node_count()
                )));
            }
            expand(ckg, user, depth, keep, &mut TopK { scores, k })
        }
        Pruning::Random(k) => expand(ckg, user, depth, keep, &mut RandomK { rng, k }),
    })
}

/// Nodes whose shortest-path distances to both endpoints sum to at most `L`,
/// with every CKG edge among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UiSubgraph {
    pub user: u32,
    pub item: u32,
    pub depth: usize,
    pub nodes: Vec<u32>,
    pub edges: Vec<(u32, u32, u32)>,
}

/// Hop distances from `source` (`u32::MAX` when unreachable).
pub fn bfs_distances(ckg: &CollaborativeKG, source: u32) -> Vec<u32> {
    let mut dist = vec![u32::MAX; ckg.node_count()];
    let mut queue = VecDeque::new();
    dist[source as usize] = 0;
    queue.push_back(source);
    while let Some(n) = queue.pop_front() {
        let d = dist[n as usize] + 1;
        for &t in ckg.edges_of(n).1 {
            if dist[t as usize] == u32::MAX {
                dist[t as usize] = d;
                queue.push_back(t);
            }
        }
    }
    dist
}

/// The user-item subgraph of depth `depth` between two nodes.
pub fn extract_ui_subgraph(ckg: &CollaborativeKG, user: u32, item: u32, depth: usize) -> UiSubgraph {
    let du = bfs_distances(ckg, user);
    let di = bfs_distances(ckg, item);
    let member: Vec<bool> = du
        .iter()
        .zip(&di)
        .map(|(&a, &b)| a != u32::MAX && b != u32::MAX && (a as usize + b as usize) <= depth)
        .collect();
    let nodes: Vec<u32> = (0..ckg.node_count() as u32).filter(|&n| member[n as usize]).collect();
    let edges = nodes
        .iter()
        .flat_map(|&h| {
            let (rels, tails) = ckg.edges_of(h);
            rels.iter().zip(tails).map(move |(&r, &t)| (h, r, t))
        })
        .filter(|e| member[e.2 as usize])
        .collect();
    UiSubgraph {
        user,
        item,
        depth,
        nodes,
        edges,
    }
}

impl UiSubgraph {
    /// Layered expansion from the user restricted to this subgraph.
    pub fn layered(&self, ckg: &CollaborativeKG) -> LayeredGraph {
        let mut member = vec![false; ckg.node_count()];
        for &n in &self.nodes {
            member[n as usize] = true;
        }
        if !member[self.user as usize] {
            return LayeredGraph::from_edge_layers(self.user, vec![Vec::new(); self.depth]).expect("empty layers");
        }
        expand(
            ckg,
            self.user,
            self.depth,
            |h, _, t| member[h as usize] && member[t as usize],
            &mut KeepAll,
        )
    }
}

/// Per-layer node and edge sets of the length-`L` paths from a user to one
/// item (`V^0..V^L`, `E^1..E^L`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairLayers {
    pub nodes: Vec<BTreeSet<u32>>,
    pub edges: Vec<BTreeSet<(u32, u32, u32)>>,
}

impl PairLayers {
    fn empty(depth: usize) -> Self {
        Self {
            nodes: vec![BTreeSet::new(); depth + 1],
            edges: vec![BTreeSet::new(); depth],
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(BTreeSet::len).sum()
    }
}

/// Enumerates every walk of exactly `depth` edges from `user` and collects,
/// for each item node a walk ends on, the per-layer nodes and edges.
///
/// Exponential in `depth`; meant for small graphs and tests.
pub fn enumerate_pair_layers(ckg: &CollaborativeKG, user: u32, depth: usize) -> BTreeMap<u32, PairLayers> {
    let mut out: BTreeMap<u32, PairLayers> = BTreeMap::new();
    let mut path: Vec<(u32, u32, u32)> = Vec::with_capacity(depth);
    walk(ckg, user, depth, &mut path, &mut out);
    out
}

fn walk(
    ckg: &CollaborativeKG,
    at: u32,
    depth: usize,
    path: &mut Vec<(u32, u32, u32)>,
    out: &mut BTreeMap<u32, PairLayers>,
) {
    if path.len() == depth {
        if ckg.node_item(at).is_some() {
            let entry = out.entry(at).or_insert_with(|| PairLayers::empty(depth));
            entry.nodes[0].insert(path.first().map_or(at, |e| e.0));
            for (l, &e) in path.iter().enumerate() {
                entry.edges[l].insert(e);
                entry.nodes[l + 1].insert(e.2);
            }
        }
        return;
    }
    let (rels, tails) = ckg.edges_of(at);
    for (&r, &t) in rels.iter().zip(tails) {
        path.push((at, r, t));
        walk(ckg, t, depth, path, out);
        path.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Node {
        item: u32,
        layer: usize,
        node: u32,
    },
    Edge {
        item: u32,
        layer: usize,
        edge: (u32, u32, u32),
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContainmentReport {
    pub items_checked: usize,
    pub violations: Vec<Violation>,
}

/// Checks that each listed item's path-derived layer sets are contained in
/// the unpruned user-centric layers.
pub fn verify_containment(ckg: &CollaborativeKG, user: u32, depth: usize, items: &[u32]) -> ContainmentReport {
    let layered = layered_expansion(ckg, user, depth);
    let pairs = enumerate_pair_layers(ckg, user, depth);
    let edge_sets: Vec<BTreeSet<(u32, u32, u32)>> = (1..=depth).map(|l| layered.edges(l).iter().collect()).collect();
    let mut report = ContainmentReport::default();
    for &item in items {
        report.items_checked += 1;
        let node = ckg.item_node(item);
        let Some(p) = pairs.get(&node) else { continue };
        for l in 0..=depth {
            for &n in &p.nodes[l] {
                if layered.position(l, n).is_none() {
                    report.violations.push(Violation::Node {
                        item,
                        layer: l,
                        node: n,
                    });
                }
            }
        }
        for l in 1..=depth {
            for &e in &p.edges[l - 1] {
                if !edge_sets[l - 1].contains(&e) {
                    report.violations.push(Violation::Edge {
                        item,
                        layer: l,
                        edge: e,
                    });
                }
            }
        }
    }
    report
}

/// For each item, the nodes that reach it in exactly `k` steps,
/// `k = 0..depth`. Used to count per-pair computation-graph edges without
/// enumerating paths.
#[derive(Debug, Clone)]
pub struct ItemReachSets {
    depth: usize,
    /// `sets[item][k]`, sorted.
    sets: Vec<Vec<Vec<u32>>>,
}

impl ItemReachSets {
    pub fn new(ckg: &CollaborativeKG, depth: usize) -> Self {
        let mut mark = vec![u32::MAX; ckg.node_count()];
        let mut stamp = 0u32;
        let sets = (0..ckg.item_count() as u32)
            .map(|i| {
                let mut levels = vec![vec![ckg.item_node(i)]];
                for _ in 1..depth {
                    stamp += 1;
                    let mut next = Vec::new();
                    // reverse closure: in-neighbours are out-neighbours
                    for &n in levels.last().unwrap() {
                        for &t in ckg.edges_of(n).1 {
                            if mark[t as usize] != stamp {
                                mark[t as usize] = stamp;
                                next.push(t);
                            }
                        }
                    }
                    next.sort_unstable();
                    levels.push(next);
                }
                levels
            })
            .collect();
        Self { depth, sets }
    }

    /// Per-item edge totals `sum_l |E_{u,i}^l|` for the unpruned layered graph
    /// of one user.
    pub fn pair_edge_counts(&self, layered: &LayeredGraph, node_count: usize) -> Vec<usize> {
        assert_eq!(layered.depth(), self.depth, "depth mismatch");
        let mut indeg: Vec<Vec<u32>> = Vec::with_capacity(self.depth);
        for l in 1..=self.depth {
            let mut d = vec![0u32; node_count];
            for &t in &layered.edges(l).tails {
                d[t as usize] += 1;
            }
            indeg.push(d);
        }
        self.sets
            .iter()
            .map(|levels| {
                (1..=self.depth)
                    .map(|l| {
                        levels[self.depth - l]
                            .iter()
                            .map(|&o| indeg[l - 1][o as usize] as usize)
                            .sum::<usize>()
                    })
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckg::{build_ckg, InteractionSet, TripleSet};

    fn star() -> CollaborativeKG {
        // user 0 with items 0,1,2
        build_ckg(
            &InteractionSet::from_pairs(vec![(0, 0), (0, 1), (0, 2)]),
            &TripleSet::default(),
            &[],
        )
        .unwrap()
    }

    #[test]
    fn star_first_layer() {
        let g = star();
        let lg = layered_expansion(&g, 0, 1);
        assert_eq!(lg.edges(1).len(), 3);
        assert_eq!(lg.nodes(1), &[1, 2, 3]);
        assert_eq!(lg.nodes(0), &[0]);
    }

    #[test]
    fn topk_keeps_best_tails() {
        let g = star();
        let mut scores = vec![0.0; 4];
        scores[1] = 0.5;
        scores[2] = 0.1;
        scores[3] = 0.3;
        let lg = prune_topk(&layered_expansion(&g, 0, 1), &scores, 2);
        assert_eq!(lg.nodes(1), &[1, 3]);
        let lg = prune_topk(&layered_expansion(&g, 0, 1), &scores, 5);
        assert_eq!(lg.edges(1).len(), 3);
    }

    #[test]
    fn topk_ties_break_on_tail_then_relation() {
        let g = star();
        let scores = vec![0.25; 4];
        let lg = prune_topk(&layered_expansion(&g, 0, 1), &scores, 2);
        assert_eq!(lg.nodes(1), &[1, 2]);

        let scores = vec![0.25; 6];
        let mut sel = TopK { scores: &scores, k: 2 };
        let mut c = vec![(2, 5), (0, 5), (1, 4)];
        c.sort_unstable_by_key(|c| (c.1, c.0));
        sel.select(0, &mut c);
        assert_eq!(c, vec![(1, 4), (0, 5)]);
    }

    #[test]
    fn adjacent_pair_subgraph() {
        let g = star();
        let s = extract_ui_subgraph(&g, 0, 1, 1);
        assert_eq!(s.nodes, vec![0, 1]);
        assert_eq!(s.edges, vec![(0, 0, 1), (1, 1, 0)]);
    }

    #[test]
    fn exclusion_removes_target_and_reverse() {
        let g = star();
        let items = [1u32];
        let keep = exclude_interactions(&g, 0, &items);
        let lg = expand(&g, 0, 2, keep, &mut KeepAll);
        assert_eq!(lg.nodes(1), &[2, 3]);
        assert!(lg.edges(2).iter().all(|e| e != (1, 1, 0)));
    }

    #[test]
    fn single_edge_containment_is_equality() {
        let g = build_ckg(&InteractionSet::from_pairs(vec![(0, 0)]), &TripleSet::default(), &[]).unwrap();
        let report = verify_containment(&g, 0, 1, &[0]);
        assert!(report.violations.is_empty());
        let p = enumerate_pair_layers(&g, 0, 1);
        let lg = layered_expansion(&g, 0, 1);
        assert_eq!(p[&1].edges[0], lg.edges(1).iter().collect());
    }

    #[test]
    fn unreachable_item_has_no_paths() {
        // item 1 is connected to nobody
        let g = build_ckg(
            &InteractionSet::new(1, 2, vec![(0, 0)]).unwrap(),
            &TripleSet::default(),
            &[],
        )
        .unwrap();
        let p = enumerate_pair_layers(&g, 0, 3);
        assert!(!p.contains_key(&2));
        assert!(verify_containment(&g, 0, 3, &[1]).violations.is_empty());
    }

    #[test]
    fn from_edge_layers_rejects_orphan_heads() {
        assert!(LayeredGraph::from_edge_layers(0, vec![vec![(0, 0, 1)], vec![(5, 0, 2)]]).is_err());
    }
}
