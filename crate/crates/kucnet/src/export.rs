//! JSON and DOT renderings of computation graphs and explanations.
//!
//! Explanation JSON (version 1):
//!
//! ```text
//! { "version": 1, "user": <node>, "item": <node>, "threshold": <f64>,
//!   "nodes": [ { "id": <node>, "type": "user" | "item" | "entity", "local": <id> } ],
//!   "edges": [ { "head": <node>, "relation": <name>, "relation_id": <id>,
//!                "tail": <node>, "layer": <1..L>, "weight": <f64> } ] }
//! ```
//!
//! Node ids are global CKG ids. Relation names are `interact`, `r<k>` for KG
//! relation `k`, and a leading `-` for reverses.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use kucnet_core::ckg::{CollaborativeKG, NodeKind};
use kucnet_core::explain::{Explanation, ExplanationEdge};
use kucnet_core::subgraph::LayeredGraph;
use serde::{Deserialize, Serialize};

pub const EXPLANATION_VERSION: u32 = 1;

pub fn relation_name(ckg: &CollaborativeKG, rel: u32) -> String {
    let f = ckg.forward_relation_count() as u32;
    let base = rel % f;
    let name = if base == 0 {
        "interact".to_string()
    } else {
        format!("r{}", base - 1)
    };
    if rel >= f {
        format!("-{name}")
    } else {
        name
    }
}

pub fn relation_names(ckg: &CollaborativeKG) -> Vec<String> {
    (0..ckg.relation_count() as u32)
        .map(|r| relation_name(ckg, r))
        .collect()
}

fn node_label(ckg: &CollaborativeKG, node: u32) -> (&'static str, u32) {
    match ckg.node_kind(node) {
        NodeKind::User(u) => ("user", u),
        NodeKind::Item(i) => ("item", i),
        NodeKind::Entity(e) => ("entity", e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub local: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub head: u32,
    pub relation: String,
    pub relation_id: u32,
    pub tail: u32,
    pub layer: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub version: u32,
    pub user: u32,
    pub item: u32,
    pub threshold: f64,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl ExplanationRecord {
    pub fn new(e: &Explanation, ckg: &CollaborativeKG) -> Self {
        Self {
            version: EXPLANATION_VERSION,
            user: e.user,
            item: e.item,
            threshold: e.threshold,
            nodes: e
                .nodes
                .iter()
                .map(|&n| {
                    let (kind, local) = node_label(ckg, n);
                    NodeRecord {
                        id: n,
                        kind: kind.to_string(),
                        local,
                    }
                })
                .collect(),
            edges: e
                .edges
                .iter()
                .map(|x| EdgeRecord {
                    head: x.head,
                    relation: relation_name(ckg, x.rel),
                    relation_id: x.rel,
                    tail: x.tail,
                    layer: x.layer,
                    weight: x.weight,
                })
                .collect(),
        }
    }

    pub fn to_explanation(&self) -> Explanation {
        Explanation {
            user: self.user,
            item: self.item,
            threshold: self.threshold,
            edges: self
                .edges
                .iter()
                .map(|x| ExplanationEdge {
                    head: x.head,
                    rel: x.relation_id,
                    tail: x.tail,
                    layer: x.layer,
                    weight: x.weight,
                })
                .collect(),
            nodes: self.nodes.iter().map(|n| n.id).collect(),
        }
    }
}

pub fn explanation_json(e: &Explanation, ckg: &CollaborativeKG) -> String {
    serde_json::to_string_pretty(&ExplanationRecord::new(e, ckg)).expect("record serializes")
}

pub fn parse_explanation_json(text: &str) -> serde_json::Result<Explanation> {
    let rec: ExplanationRecord = serde_json::from_str(text)?;
    Ok(rec.to_explanation())
}

/// Graphviz rendering with one rank per layer. A node reached at several
/// layers is drawn once per layer; edge labels carry the weight to two
/// decimals.
pub fn explanation_dot(e: &Explanation, ckg: &CollaborativeKG) -> String {
    let mut s = String::from("digraph explanation {\n  rankdir=LR;\n");
    let mut layers: Vec<BTreeSet<u32>> = Vec::new();
    for x in &e.edges {
        if layers.len() <= x.layer {
            layers.resize(x.layer + 1, BTreeSet::new());
        }
        layers[x.layer - 1].insert(x.head);
        layers[x.layer].insert(x.tail);
    }
    for (l, nodes) in layers.iter().enumerate() {
        let _ = writeln!(s, "  subgraph layer{l} {{\n    rank=same;");
        for &n in nodes {
            let (kind, local) = node_label(ckg, n);
            let shape = match kind {
                "user" => "box",
                "item" => "doublecircle",
                _ => "ellipse",
            };
            let _ = writeln!(s, "    \"{l}:{n}\" [label=\"{kind} {local}\", shape={shape}];");
        }
        s.push_str("  }\n");
    }
    for x in &e.edges {
        let _ = writeln!(
            s,
            "  \"{}:{}\" -> \"{}:{}\" [label=\"{:.2}\", tooltip=\"{}\"];",
            x.layer - 1,
            x.head,
            x.layer,
            x.tail,
            x.weight,
            relation_name(ckg, x.rel)
        );
    }
    s.push_str("}\n");
    s
}

/// Debug form of a layered graph: sorted node layers, per-layer edge triples
/// in storage order and, optionally, a score per layer node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredRecord {
    pub user: u32,
    pub nodes: Vec<Vec<u32>>,
    pub edges: Vec<Vec<(u32, u32, u32)>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scores: Option<Vec<Vec<f64>>>,
}

impl LayeredRecord {
    pub fn new(g: &LayeredGraph, scores: Option<&[f64]>) -> Self {
        let nodes: Vec<Vec<u32>> = (0..=g.depth()).map(|l| g.nodes(l).to_vec()).collect();
        let scores = scores.map(|s| {
            nodes
                .iter()
                .map(|l| l.iter().map(|&n| s[n as usize]).collect())
                .collect()
        });
        Self {
            user: g.user(),
            nodes,
            edges: g.edge_layers(),
            scores,
        }
    }

    pub fn to_graph(&self) -> kucnet_core::Result<LayeredGraph> {
        LayeredGraph::from_edge_layers(self.user, self.edges.clone())
    }
}

pub fn layered_json(g: &LayeredGraph, scores: Option<&[f64]>) -> String {
    serde_json::to_string(&LayeredRecord::new(g, scores)).expect("record serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use kucnet_core::ckg::{build_ckg, InteractionSet, TripleSet};
    use kucnet_core::subgraph::layered_expansion;

    fn ckg() -> CollaborativeKG {
        let inter = InteractionSet::new(1, 2, vec![(0, 0), (0, 1)]).unwrap();
        let kg = TripleSet::new(3, 1, vec![(0, 0, 2), (1, 0, 2)]).unwrap();
        build_ckg(&inter, &kg, &[(0, 0), (1, 1)]).unwrap()
    }

    fn sample() -> Explanation {
        Explanation {
            user: 0,
            item: 2,
            threshold: 0.5,
            edges: vec![
                ExplanationEdge {
                    head: 0,
                    rel: 0,
                    tail: 1,
                    layer: 1,
                    weight: 0.731_058_578_630_004_9,
                },
                ExplanationEdge {
                    head: 1,
                    rel: 1,
                    tail: 3,
                    layer: 2,
                    weight: 0.6,
                },
                ExplanationEdge {
                    head: 3,
                    rel: 3,
                    tail: 2,
                    layer: 3,
                    weight: 0.5,
                },
            ],
            nodes: [0, 1, 2, 3].into_iter().collect(),
        }
    }

    #[test]
    fn names() {
        let g = ckg();
        assert_eq!(relation_names(&g), vec!["interact", "r0", "-interact", "-r0"]);
    }

    #[test]
    fn json_round_trip() {
        let g = ckg();
        let e = sample();
        let text = explanation_json(&e, &g);
        assert_eq!(parse_explanation_json(&text).unwrap(), e);
        assert!(text.contains("\"type\": \"entity\""));
        assert!(text.contains("\"relation\": \"-r0\""));
    }

    #[test]
    fn empty_explanation() {
        let g = ckg();
        let e = Explanation {
            user: 0,
            item: 1,
            threshold: 1.0,
            edges: vec![],
            nodes: Default::default(),
        };
        let v: serde_json::Value = serde_json::from_str(&explanation_json(&e, &g)).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 0);
        assert_eq!(v["edges"].as_array().unwrap().len(), 0);
        assert_eq!(explanation_dot(&e, &g), "digraph explanation {\n  rankdir=LR;\n}\n");
    }

    #[test]
    fn dot_uses_two_decimals_and_ranks() {
        let dot = explanation_dot(&sample(), &ckg());
        assert!(
            dot.contains("\"0:0\" -> \"1:1\" [label=\"0.73\", tooltip=\"interact\"]"),
            "{dot}"
        );
        assert!(dot.contains("label=\"0.50\""));
        assert_eq!(dot.matches("rank=same").count(), 4);
    }

    #[test]
    fn layered_round_trip() {
        let g = ckg();
        let lg = layered_expansion(&g, 0, 3);
        let scores: Vec<f64> = (0..g.node_count()).map(|n| n as f64 / 10.0).collect();
        let text = layered_json(&lg, Some(&scores));
        let rec: LayeredRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(rec.to_graph().unwrap(), lg);
        assert_eq!(rec.scores.unwrap()[0], vec![0.0]);
    }
}
