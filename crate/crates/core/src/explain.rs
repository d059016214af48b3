//! Attention-thresholded explanation subgraphs for a (user, item) pair.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::model::ForwardTape;
use crate::subgraph::LayeredGraph;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How the thresholded edges are tied to the item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// Keep edges on a user-to-item path made only of kept edges.
    #[default]
    Paths,
    /// Keep every edge above the threshold that lies on some path to the
    /// item in the unfiltered graph.
    EdgesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplanationEdge {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
    /// 1-based edge layer.
    pub layer: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    /// User node.
    pub user: u32,
    /// Item node.
    pub item: u32,
    pub threshold: f64,
    /// Sorted by (layer, head, rel, tail).
    pub edges: Vec<ExplanationEdge>,
    pub nodes: BTreeSet<u32>,
}

impl Explanation {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Keeps the edges whose attention weight is at least `threshold` and that lie
/// on a surviving layered path from the user to `item_node` in the last layer.
///
/// An item that is unreachable after filtering yields an empty explanation.
pub fn extract_explanation(tape: &ForwardTape, graph: &LayeredGraph, item_node: u32, threshold: f64) -> Explanation {
    extract_explanation_with(tape, graph, item_node, threshold, Connectivity::Paths)
}

pub fn extract_explanation_with(
    tape: &ForwardTape,
    graph: &LayeredGraph,
    item_node: u32,
    threshold: f64,
    mode: Connectivity,
) -> Explanation {
    let depth = graph.depth();
    let above: Vec<Vec<bool>> = (1..=depth)
        .map(|l| tape.attention(l).iter().map(|&a| a >= threshold).collect())
        .collect();
    // connectivity is traced over `kept`; `above` decides what is reported
    let kept = match mode {
        Connectivity::Paths => above.clone(),
        Connectivity::EdgesOnly => above.iter().map(|l| vec![true; l.len()]).collect(),
    };

    // forward: positions at each layer reached by kept edges from the user
    let mut reach: Vec<Vec<bool>> = (0..=depth).map(|l| vec![false; graph.nodes(l).len()]).collect();
    if let Some(slot) = reach[0].first_mut() {
        *slot = true;
    }
    for l in 1..=depth {
        let e = graph.edges(l);
        for k in 0..e.len() {
            if kept[l - 1][k] && reach[l - 1][e.head_pos[k] as usize] {
                reach[l][e.tail_pos[k] as usize] = true;
            }
        }
    }

    // backward: positions from which the item is reached by kept edges
    let mut alive: Vec<Vec<bool>> = (0..=depth).map(|l| vec![false; graph.nodes(l).len()]).collect();
    if let Some(p) = graph.position(depth, item_node) {
        alive[depth][p] = reach[depth][p];
    }
    let mut edges = Vec::new();
    for l in (1..=depth).rev() {
        let e = graph.edges(l);
        let alpha = tape.attention(l);
        for k in 0..e.len() {
            let (h, t) = (e.head_pos[k] as usize, e.tail_pos[k] as usize);
            if kept[l - 1][k] && reach[l - 1][h] && alive[l][t] {
                alive[l - 1][h] = true;
                if !above[l - 1][k] {
                    continue;
                }
                edges.push(ExplanationEdge {
                    head: e.heads[k],
                    rel: e.rels[k],
                    tail: e.tails[k],
                    layer: l,
                    weight: alpha[k],
                });
            }
        }
    }
    edges.sort_by_key(|e| (e.layer, e.head, e.rel, e.tail));
    let nodes = edges.iter().flat_map(|e| [e.head, e.tail]).collect();
    Explanation {
        user: graph.user(),
        item: item_node,
        threshold,
        edges,
        nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, init_params, ModelConfig};
    use crate::subgraph::LayeredGraph;

    // user 0 -> 1 -> 2 -> 3 along relations 0, 1, 2
    fn path_graph() -> LayeredGraph {
        LayeredGraph::from_edge_layers(0, vec![vec![(0, 0, 1)], vec![(1, 1, 2)], vec![(2, 2, 3)]]).unwrap()
    }

    #[test]
    fn single_path_keeps_its_edges() {
        let g = path_graph();
        let mut params = init_params(ModelConfig::new(4, 3, 3, 3), 1).unwrap();
        // zero projections and a large bias put every weight at sigmoid(w . relu(b))
        for layer in &mut params.layers {
            layer.att_src.iter_mut().for_each(|x| *x = 0.0);
            layer.att_rel.iter_mut().for_each(|x| *x = 0.0);
            layer.att_vec.iter_mut().for_each(|x| *x = 1.0);
        }
        params.att_bias.iter_mut().for_each(|x| *x = 1.0);
        let tape = forward(&g, &params).unwrap();
        let e = extract_explanation(&tape, &g, 3, 0.5);
        let expected = 1.0 / (1.0 + (-3.0f64).exp());
        assert_eq!(e.edges.len(), 3);
        for (k, edge) in e.edges.iter().enumerate() {
            assert_eq!(
                (edge.head, edge.rel, edge.tail, edge.layer),
                (k as u32, k as u32, k as u32 + 1, k + 1)
            );
            assert!((edge.weight - expected).abs() < 1e-12);
        }
        assert_eq!(e.nodes.iter().copied().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(extract_explanation(&tape, &g, 3, expected + 1e-9).is_empty());
    }

    #[test]
    fn dangling_branches_are_removed() {
        // 0 -> {1, 2}, 1 -> 3, 2 -> 4; only the branch through 1 reaches 3
        let g =
            LayeredGraph::from_edge_layers(0, vec![vec![(0, 0, 1), (0, 0, 2)], vec![(1, 0, 3), (2, 0, 4)]]).unwrap();
        let params = init_params(ModelConfig::new(4, 3, 2, 1), 2).unwrap();
        let tape = forward(&g, &params).unwrap();
        let e = extract_explanation(&tape, &g, 3, 0.0);
        let triples: Vec<_> = e.edges.iter().map(|e| (e.head, e.rel, e.tail)).collect();
        assert_eq!(triples, vec![(0, 0, 1), (1, 0, 3)]);
        assert!(extract_explanation(&tape, &g, 1, 0.0).is_empty());
        assert!(extract_explanation(&tape, &g, 3, 1.0).is_empty());
    }

    #[test]
    fn edges_only_mode_keeps_disconnected_strong_edges() {
        let g = path_graph();
        let mut params = init_params(ModelConfig::new(4, 3, 3, 3), 1).unwrap();
        for layer in &mut params.layers {
            layer.att_src.iter_mut().for_each(|x| *x = 0.0);
            layer.att_rel.iter_mut().for_each(|x| *x = 0.0);
            layer.att_vec.iter_mut().for_each(|x| *x = 1.0);
        }
        // layer 2 weight drops to sigmoid(-1 * 1) < 0.5
        params.layers[1].att_vec.iter_mut().for_each(|x| *x = -1.0 / 3.0);
        params.att_bias.iter_mut().for_each(|x| *x = 1.0);
        let tape = forward(&g, &params).unwrap();
        assert!(extract_explanation(&tape, &g, 3, 0.5).is_empty());
        let e = extract_explanation_with(&tape, &g, 3, 0.5, Connectivity::EdgesOnly);
        let layers: Vec<_> = e.edges.iter().map(|e| e.layer).collect();
        assert_eq!(layers, vec![1, 3]);
    }
}
