//! Attention message passing over a layered user-centric graph.
//!
//! For layer `l` and tail node `o`:
//!
//! ```text
//! x_o   = sum over edges (s, r, o):  a_sr * (h_s + e_r)
//! h_o   = act(W x_o)
//! a_sr  = sigmoid(w_att . relu(A_src h_s + A_rel e_r + b_att))
//! logit = w . h_i            (item i in the last layer, else 0)
//! ```
//!
//! `W (h_s + e_r)` is linear, so the weighted sum is taken before the matrix
//! product. The user's own state starts at zero. Gradients are derived by hand
//! in [`backward`]; [`crate::gradcheck`] compares them with finite differences.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::ckg::CollaborativeKG;
use crate::error::{Error, Result};
use crate::rng;
use crate::subgraph::LayeredGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative from the pre-activation `x` and output `y`. ReLU uses 0 at 0.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub dim: usize,
    pub att_dim: usize,
    pub depth: usize,
    /// Forward plus reverse relations.
    pub relation_count: usize,
    pub activation: Activation,
    /// When off, every attention weight is fixed to 1.
    pub attention: bool,
}

impl ModelConfig {
    pub fn new(dim: usize, att_dim: usize, depth: usize, relation_count: usize) -> Self {
        Self {
            dim,
            att_dim,
            depth,
            relation_count,
            activation: Activation::Relu,
            attention: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.att_dim == 0 || self.depth == 0 {
            return Err(Error::Config(format!(
                "dim {}, att_dim {} and depth {} must be positive",
                self.dim, self.att_dim, self.depth
            )));
        }
        Ok(())
    }
}

/// Parameters of one message-passing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Relation embeddings, `relation_count x dim`.
    pub relation: Vec<f64>,
    /// Message transform, `dim x dim`.
    pub message: Vec<f64>,
    /// Attention output vector, `att_dim`.
    pub att_vec: Vec<f64>,
    /// Attention source projection, `att_dim x dim`.
    pub att_src: Vec<f64>,
    /// Attention relation projection, `att_dim x dim`.
    pub att_rel: Vec<f64>,
}

/// Full parameter set. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
    /// Attention bias shared by all layers, `att_dim`.
    pub att_bias: Vec<f64>,
    /// Final scoring vector, `dim`.
    pub score: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, a, r) = (config.dim, config.att_dim, config.relation_count);
        let layer = LayerParams {
            relation: vec![0.0; r * d],
            message: vec![0.0; d * d],
            att_vec: vec![0.0; a],
            att_src: vec![0.0; a * d],
            att_rel: vec![0.0; a * d],
        };
        Ok(Self {
            config,
            layers: vec![layer; config.depth],
            att_bias: vec![0.0; a],
            score: vec![0.0; d],
        })
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("shape already validated")
    }

    /// Every tensor in a fixed order: per layer relation, message, att_vec,
    /// att_src, att_rel; then att_bias and score.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(5 * self.layers.len() + 2);
        for l in &self.layers {
            out.extend([&l.relation[..], &l.message, &l.att_vec, &l.att_src, &l.att_rel]);
        }
        out.push(&self.att_bias);
        out.push(&self.score);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(5 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.relation);
            out.push(&mut l.message);
            out.push(&mut l.att_vec);
            out.push(&mut l.att_src);
            out.push(&mut l.att_rel);
        }
        out.push(&mut self.att_bias);
        out.push(&mut self.score);
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn relation_embedding(&self, layer: usize, rel: u32) -> &[f64] {
        let d = self.config.dim;
        &self.layers[layer].relation[rel as usize * d..(rel as usize + 1) * d]
    }
}

/// Glorot-uniform matrices, relation embeddings in `+-sqrt(6/d)`, zero bias.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(config)?;
    let (d, a) = (config.dim, config.att_dim);
    let mut rng = rng::stream(seed, &[0x494e]);
    let glorot = |fan_in: usize, fan_out: usize| libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut fill = |t: &mut [f64], bound: f64| {
        for v in t.iter_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
    };
    for l in &mut p.layers {
        fill(&mut l.relation, libm::sqrt(6.0 / d as f64));
        fill(&mut l.message, glorot(d, d));
        fill(&mut l.att_vec, glorot(a, 1));
        fill(&mut l.att_src, glorot(d, a));
        fill(&mut l.att_rel, glorot(d, a));
    }
    fill(&mut p.score, glorot(d, 1));
    Ok(p)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `out = M x` for row-major `M` (`rows x x.len()`).
fn matvec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `out += M^T y` for row-major `M` (`y.len() x out.len()`).
fn matvec_t_add(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (i, &yi) in y.iter().enumerate() {
        if yi == 0.0 {
            continue;
        }
        let row = &m[i * cols..(i + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yi;
        }
    }
}

/// `M += y x^T`.
fn outer_add(m: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, &yi) in y.iter().enumerate() {
        if yi == 0.0 {
            continue;
        }
        let row = &mut m[i * cols..(i + 1) * cols];
        for (a, b) in row.iter_mut().zip(x) {
            *a += yi * b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Attention weight of an edge with source state `h_s` and relation
/// embedding `h_r` under one layer's parameters and the shared bias.
pub fn attention_weight(h_s: &[f64], h_r: &[f64], layer: &LayerParams, att_bias: &[f64]) -> f64 {
    let a = att_bias.len();
    let mut s = vec![0.0; a];
    let mut r = vec![0.0; a];
    matvec(&layer.att_src, h_s, &mut s);
    matvec(&layer.att_rel, h_r, &mut r);
    let z: f64 = (0..a)
        .map(|j| layer.att_vec[j] * (s[j] + r[j] + att_bias[j]).max(0.0))
        .sum();
    sigmoid(z)
}

/// Intermediate values of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTape {
    /// Weighted input sums per tail, `n x dim`.
    pub input: Vec<f64>,
    /// `W x` per tail.
    pub pre: Vec<f64>,
    /// Output states per tail.
    pub state: Vec<f64>,
    /// Attention pre-activations per edge, `edges x att_dim`.
    pub att_pre: Vec<f64>,
    /// Attention weights per edge.
    pub alpha: Vec<f64>,
    /// Dropout multipliers per edge (empty when dropout is off).
    pub mask: Vec<f64>,
}

/// Everything [`backward`] needs, plus the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    user: u32,
    edge_counts: Vec<usize>,
    dim: usize,
    layers: Vec<LayerTape>,
    final_nodes: Vec<u32>,
    /// `w . h` for every node of the last layer.
    logits: Vec<f64>,
}

impl ForwardTape {
    pub fn layers(&self) -> &[LayerTape] {
        &self.layers
    }

    /// Attention weights of edge layer `l` (1-based), in edge order.
    pub fn attention(&self, l: usize) -> &[f64] {
        &self.layers[l - 1].alpha
    }

    /// State of `node` at layer `l` (1-based), given the graph the tape came from.
    pub fn state(&self, graph: &LayeredGraph, l: usize, node: u32) -> Option<&[f64]> {
        let p = graph.position(l, node)?;
        Some(&self.layers[l - 1].state[p * self.dim..(p + 1) * self.dim])
    }

    /// Last-layer nodes, sorted.
    pub fn final_nodes(&self) -> &[u32] {
        &self.final_nodes
    }

    /// Logits aligned with [`Self::final_nodes`].
    pub fn final_logits(&self) -> &[f64] {
        &self.logits
    }

    /// Logit of a node; zero when it is not in the last layer.
    pub fn logit(&self, node: u32) -> f64 {
        self.final_nodes.binary_search(&node).map_or(0.0, |p| self.logits[p])
    }

    pub fn final_position(&self, node: u32) -> Option<usize> {
        self.final_nodes.binary_search(&node).ok()
    }

    /// Logits of all items of `ckg`, indexed by item id.
    pub fn item_logits(&self, ckg: &CollaborativeKG) -> Vec<f64> {
        let mut out = vec![0.0; ckg.item_count()];
        for (&n, &y) in self.final_nodes.iter().zip(&self.logits) {
            if let Some(i) = ckg.node_item(n) {
                out[i as usize] = y;
            }
        }
        out
    }
}

fn check_graph(graph: &LayeredGraph, params: &ModelParams) -> Result<()> {
    let c = &params.config;
    if graph.depth() != c.depth {
        return Err(Error::Config(format!(
            "graph depth {} but model depth {}",
            graph.depth(),
            c.depth
        )));
    }
    for l in 1..=graph.depth() {
        if let Some(&r) = graph.edges(l).rels.iter().find(|&&r| r as usize >= c.relation_count) {
            return Err(Error::Config(format!(
                "relation {r} outside model vocabulary of {}",
                c.relation_count
            )));
        }
    }
    Ok(())
}

/// Inference pass (no dropout).
pub fn forward(graph: &LayeredGraph, params: &ModelParams) -> Result<ForwardTape> {
    forward_with(graph, params, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// Training pass with edge-message dropout of rate `dropout`.
pub fn forward_with<R: Rng + ?Sized>(
    graph: &LayeredGraph,
    params: &ModelParams,
    dropout: f64,
    rng: &mut R,
) -> Result<ForwardTape> {
    check_graph(graph, params)?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Config(format!("dropout {dropout} outside [0,1)")));
    }
    let c = params.config;
    let (d, a) = (c.dim, c.att_dim);
    let mut layers: Vec<LayerTape> = Vec::with_capacity(c.depth);
    let zero_state = vec![0.0; d];
    let mut rel_att = vec![0.0; c.relation_count * a];
    let mut v = vec![0.0; d];

    for l in 1..=c.depth {
        let lp = &params.layers[l - 1];
        let edges = graph.edges(l);
        let n_prev = graph.nodes(l - 1).len();
        let n = graph.nodes(l).len();
        let prev: &[f64] = if l == 1 { &zero_state } else { &layers[l - 2].state };
        debug_assert_eq!(prev.len(), n_prev * d);

        let mut att_pre = Vec::new();
        let mut alpha = vec![1.0; edges.len()];
        if c.attention {
            let mut src_att = vec![0.0; n_prev * a];
            for s in 0..n_prev {
                matvec(&lp.att_src, &prev[s * d..(s + 1) * d], &mut src_att[s * a..(s + 1) * a]);
            }
            for r in 0..c.relation_count {
                matvec(
                    &lp.att_rel,
                    &lp.relation[r * d..(r + 1) * d],
                    &mut rel_att[r * a..(r + 1) * a],
                );
            }
            att_pre = vec![0.0; edges.len() * a];
            for k in 0..edges.len() {
                let s = edges.head_pos[k] as usize;
                let r = edges.rels[k] as usize;
                let pre = &mut att_pre[k * a..(k + 1) * a];
                let mut z = 0.0;
                for j in 0..a {
                    pre[j] = src_att[s * a + j] + rel_att[r * a + j] + params.att_bias[j];
                    z += lp.att_vec[j] * pre[j].max(0.0);
                }
                alpha[k] = sigmoid(z);
            }
        }

        let mask: Vec<f64> = if dropout > 0.0 {
            let keep = 1.0 / (1.0 - dropout);
            (0..edges.len())
                .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep })
                .collect()
        } else {
            Vec::new()
        };

        let mut input = vec![0.0; n * d];
        for k in 0..edges.len() {
            let s = edges.head_pos[k] as usize;
            let r = edges.rels[k] as usize;
            let o = edges.tail_pos[k] as usize;
            let w = alpha[k] * mask.get(k).copied().unwrap_or(1.0);
            if w == 0.0 {
                continue;
            }
            let hs = &prev[s * d..(s + 1) * d];
            let hr = &lp.relation[r * d..(r + 1) * d];
            for j in 0..d {
                v[j] = hs[j] + hr[j];
            }
            for (x, vj) in input[o * d..(o + 1) * d].iter_mut().zip(&v) {
                *x += w * vj;
            }
        }
        let mut pre = vec![0.0; n * d];
        for o in 0..n {
            matvec(&lp.message, &input[o * d..(o + 1) * d], &mut pre[o * d..(o + 1) * d]);
        }
        let state = pre.iter().map(|&x| c.activation.apply(x)).collect();
        layers.push(LayerTape {
            input,
            pre,
            state,
            att_pre,
            alpha,
            mask,
        });
    }

    let last = &layers[c.depth - 1].state;
    let final_nodes = graph.nodes(c.depth).to_vec();
    let logits = (0..final_nodes.len())
        .map(|o| dot(&params.score, &last[o * d..(o + 1) * d]))
        .collect();
    Ok(ForwardTape {
        user: graph.user(),
        edge_counts: (1..=c.depth).map(|l| graph.edges(l).len()).collect(),
        dim: d,
        layers,
        final_nodes,
        logits,
    })
}

/// Gradients of `sum_o dlogits[o] * logit_o` with respect to every parameter.
///
/// `dlogits` is aligned with [`ForwardTape::final_nodes`].
pub fn backward(
    tape: &ForwardTape,
    graph: &LayeredGraph,
    params: &ModelParams,
    dlogits: &[f64],
) -> Result<ModelParams> {
    let c = params.config;
    let stale = tape.user != graph.user()
        || tape.edge_counts.len() != graph.depth()
        || tape
            .edge_counts
            .iter()
            .enumerate()
            .any(|(l, &n)| graph.edges(l + 1).len() != n)
        || tape.final_nodes.as_slice() != graph.nodes(graph.depth())
        || tape.dim != c.dim;
    if stale {
        return Err(Error::Contract("tape does not belong to this graph".into()));
    }
    if dlogits.len() != tape.final_nodes.len() {
        return Err(Error::Contract(format!(
            "{} logit gradients for {} final nodes",
            dlogits.len(),
            tape.final_nodes.len()
        )));
    }
    let (d, a) = (c.dim, c.att_dim);
    let mut grads = params.zeros_like();

    let last = &tape.layers[c.depth - 1];
    let mut g_state = vec![0.0; tape.final_nodes.len() * d];
    for (o, &g) in dlogits.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let h = &last.state[o * d..(o + 1) * d];
        for j in 0..d {
            grads.score[j] += g * h[j];
            g_state[o * d + j] = g * params.score[j];
        }
    }

    let zero_state = vec![0.0; d];
    let mut g_input = vec![0.0; d];
    let mut v = vec![0.0; d];
    for l in (1..=c.depth).rev() {
        let lt = &tape.layers[l - 1];
        let lp = &params.layers[l - 1];
        let edges = graph.edges(l);
        let n = graph.nodes(l).len();
        let n_prev = graph.nodes(l - 1).len();
        let prev: &[f64] = if l == 1 { &zero_state } else { &tape.layers[l - 2].state };

        // through the activation, then the message transform
        let mut g_in_all = vec![0.0; n * d];
        {
            let gl = &mut grads.layers[l - 1];
            let mut g_pre = vec![0.0; d];
            for o in 0..n {
                let mut any = false;
                for j in 0..d {
                    let k = o * d + j;
                    g_pre[j] = g_state[k] * c.activation.derivative(lt.pre[k], lt.state[k]);
                    any |= g_pre[j] != 0.0;
                }
                if !any {
                    continue;
                }
                outer_add(&mut gl.message, &g_pre, &lt.input[o * d..(o + 1) * d]);
                matvec_t_add(&lp.message, &g_pre, &mut g_in_all[o * d..(o + 1) * d]);
            }
        }

        let mut g_prev = vec![0.0; n_prev * d];
        let mut acc_src = vec![0.0; if c.attention { n_prev * a } else { 0 }];
        let mut acc_rel = vec![0.0; if c.attention { c.relation_count * a } else { 0 }];
        let gl = &mut grads.layers[l - 1];
        for k in 0..edges.len() {
            let s = edges.head_pos[k] as usize;
            let r = edges.rels[k] as usize;
            let o = edges.tail_pos[k] as usize;
            let m = lt.mask.get(k).copied().unwrap_or(1.0);
            if m == 0.0 {
                continue;
            }
            g_input.copy_from_slice(&g_in_all[o * d..(o + 1) * d]);
            let w = lt.alpha[k] * m;
            let hs = &prev[s * d..(s + 1) * d];
            let hr = &lp.relation[r * d..(r + 1) * d];
            for j in 0..d {
                v[j] = hs[j] + hr[j];
                g_prev[s * d + j] += w * g_input[j];
                gl.relation[r * d + j] += w * g_input[j];
            }
            if c.attention {
                let alpha = lt.alpha[k];
                let dz = m * dot(&g_input, &v) * alpha * (1.0 - alpha);
                if dz == 0.0 {
                    continue;
                }
                let pre = &lt.att_pre[k * a..(k + 1) * a];
                for j in 0..a {
                    if pre[j] > 0.0 {
                        gl.att_vec[j] += dz * pre[j];
                        let dp = dz * lp.att_vec[j];
                        acc_src[s * a + j] += dp;
                        acc_rel[r * a + j] += dp;
                        grads.att_bias[j] += dp;
                    }
                }
            }
        }
        if c.attention {
            for s in 0..n_prev {
                let acc = &acc_src[s * a..(s + 1) * a];
                let hs = &prev[s * d..(s + 1) * d];
                outer_add(&mut gl.att_src, acc, hs);
                matvec_t_add(&lp.att_src, acc, &mut g_prev[s * d..(s + 1) * d]);
            }
            for r in 0..c.relation_count {
                let acc = &acc_rel[r * a..(r + 1) * a];
                let hr = &lp.relation[r * d..(r + 1) * d];
                outer_add(&mut gl.att_rel, acc, hr);
                matvec_t_add(&lp.att_rel, acc, &mut gl.relation[r * d..(r + 1) * d]);
            }
        }
        g_state = g_prev;
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(depth: usize) -> LayeredGraph {
        // 0 -r0-> 1 -r1-> 2 -r0-> 3 ...
        let layers = (0..depth)
            .map(|l| vec![(l as u32, (l % 2) as u32, l as u32 + 1)])
            .collect();
        LayeredGraph::from_edge_layers(0, layers).unwrap()
    }

    #[test]
    fn same_seed_same_params() {
        let c = ModelConfig::new(4, 3, 2, 6);
        assert_eq!(init_params(c, 5).unwrap(), init_params(c, 5).unwrap());
        assert_ne!(init_params(c, 5).unwrap(), init_params(c, 6).unwrap());
    }

    #[test]
    fn init_bounds_and_zero_bias() {
        let c = ModelConfig::new(8, 3, 2, 4);
        let p = init_params(c, 1).unwrap();
        assert!(p.att_bias.iter().all(|&b| b == 0.0));
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(p.layers[0].message.iter().all(|w| w.abs() <= bound));
        let rb = (6.0f64 / 8.0).sqrt();
        assert!(p.layers[1].relation.iter().all(|w| w.abs() <= rb));
    }

    #[test]
    fn attention_of_zero_params_is_half() {
        let p = ModelParams::zeros(ModelConfig::new(3, 2, 1, 2)).unwrap();
        assert_eq!(
            attention_weight(&[1.0, 2.0, 3.0], &[0.5, 0.0, 1.0], &p.layers[0], &p.att_bias),
            0.5
        );
    }

    #[test]
    fn attention_hand_case() {
        let mut p = ModelParams::zeros(ModelConfig::new(2, 1, 1, 1)).unwrap();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 1.0);
        }
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        let got = attention_weight(&[0.0, 0.0], &[0.0, 0.0], &p.layers[0], &p.att_bias);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn identity_path_sums_relation_embeddings() {
        // W = I, identity activation: h^L = a_L(e_L + a_{L-1}(e_{L-1} + ...))
        let depth = 3;
        let mut c = ModelConfig::new(2, 2, depth, 2);
        c.activation = Activation::Identity;
        let mut p = init_params(c, 3).unwrap();
        for l in &mut p.layers {
            l.message = vec![1.0, 0.0, 0.0, 1.0];
            l.relation = vec![1.0, 0.0, 0.0, 1.0];
        }
        let g = path_graph(depth);
        let tape = forward(&g, &p).unwrap();
        let mut h = [0.0f64; 2];
        for l in 1..=depth {
            let a = tape.attention(l)[0];
            let r = (l - 1) % 2;
            let e = if r == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            h = [a * (h[0] + e[0]), a * (h[1] + e[1])];
        }
        let logit = p.score[0] * h[0] + p.score[1] * h[1];
        assert!((tape.logit(3) - logit).abs() < 1e-14);

        // with attention switched off the path sum is exact
        c.attention = false;
        p.config = c;
        let tape = forward(&g, &p).unwrap();
        assert!((tape.logit(3) - (p.score[0] * 2.0 + p.score[1])).abs() < 1e-14);
    }

    #[test]
    fn zero_relations_give_zero_logits() {
        let c = ModelConfig::new(4, 3, 2, 2);
        let mut p = init_params(c, 9).unwrap();
        for l in &mut p.layers {
            l.relation.iter_mut().for_each(|v| *v = 0.0);
        }
        let g =
            LayeredGraph::from_edge_layers(0, vec![vec![(0, 0, 1), (0, 1, 2)], vec![(1, 1, 3), (2, 0, 3)]]).unwrap();
        let tape = forward(&g, &p).unwrap();
        assert!(tape.final_logits().iter().all(|&y| y == 0.0));
        assert_eq!(tape.logit(42), 0.0);
    }

    #[test]
    fn depth_mismatch_is_config_error() {
        let p = init_params(ModelConfig::new(2, 2, 2, 2), 0).unwrap();
        assert!(matches!(forward(&path_graph(3), &p), Err(Error::Config(_))));
        let g = LayeredGraph::from_edge_layers(0, vec![vec![(0, 7, 1)], vec![(1, 0, 2)]]).unwrap();
        assert!(matches!(forward(&g, &p), Err(Error::Config(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let p = init_params(ModelConfig::new(3, 2, 2, 2), 4).unwrap();
        let g = path_graph(2);
        let tape = forward(&g, &p).unwrap();
        let grads = backward(&tape, &g, &p, &[0.0]).unwrap();
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn score_gradient_is_final_state_in_one_dim() {
        let mut c = ModelConfig::new(1, 1, 1, 1);
        c.activation = Activation::Tanh;
        let p = init_params(c, 2).unwrap();
        let g = path_graph(1);
        let tape = forward(&g, &p).unwrap();
        let grads = backward(&tape, &g, &p, &[1.0]).unwrap();
        let h = tape.state(&g, 1, 1).unwrap()[0];
        assert_eq!(grads.score[0], h);
    }

    #[test]
    fn stale_tape_rejected() {
        let p = init_params(ModelConfig::new(2, 2, 2, 2), 0).unwrap();
        let g = path_graph(2);
        let tape = forward(&g, &p).unwrap();
        let other = LayeredGraph::from_edge_layers(0, vec![vec![(0, 0, 1), (0, 1, 2)], vec![(1, 0, 3)]]).unwrap();
        assert!(matches!(backward(&tape, &other, &p, &[1.0]), Err(Error::Contract(_))));
    }
}
