//! Finite-difference check of the hand-derived gradients.

use alloc::vec::Vec;

use rand::Rng;

use crate::ckg::{build_ckg, CollaborativeKG, InteractionSet, TripleSet};
use crate::error::Result;
use crate::model::{backward, forward, init_params, Activation, ModelConfig, ModelParams};
use crate::rng;
use crate::subgraph::{layered_expansion, LayeredGraph};
use crate::train::bpr_loss;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub dim: usize,
    pub att_dim: usize,
    pub depth: usize,
    pub activation: Activation,
    pub attention: bool,
    /// Upper bound on graph nodes.
    pub max_nodes: usize,
    /// Central-difference step.
    pub epsilon: f64,
    /// Gradients smaller than this are compared on an absolute scale.
    pub magnitude_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            att_dim: 3,
            depth: 3,
            activation: Activation::Relu,
            attention: true,
            max_nodes: 20,
            epsilon: 1e-5,
            magnitude_floor: 1e-4,
        }
    }
}

/// A random problem instance: graph, parameters and BPR pairs over its last
/// layer.
#[derive(Debug, Clone)]
pub struct GradProblem {
    pub ckg: CollaborativeKG,
    pub graph: LayeredGraph,
    pub params: ModelParams,
    /// `(positive, negative)` node pairs; either may lie outside the last layer.
    pub pairs: Vec<(u32, u32)>,
}

/// Random CKG with at most `max_nodes` nodes and a user whose expansion is
/// non-trivial.
pub fn random_ckg(seed: u64, max_nodes: usize) -> CollaborativeKG {
    let mut rng = rng::stream(seed, &[0x4743]);
    let max_nodes = max_nodes.max(6);
    let users = rng.gen_range(2..=(max_nodes / 3).max(2));
    let items = rng.gen_range(2..=(max_nodes / 3).max(2));
    let entities = rng.gen_range(0..=max_nodes - users - items);
    let relations = rng.gen_range(1..=3usize);
    let mut pairs: Vec<(u32, u32)> = (0..users as u32).map(|u| (u, rng.gen_range(0..items as u32))).collect();
    for _ in 0..users + items {
        pairs.push((rng.gen_range(0..users as u32), rng.gen_range(0..items as u32)));
    }
    let inter = InteractionSet::new(users, items, pairs).expect("ids drawn in range");
    let ent_total = items + entities;
    let mut triples = Vec::new();
    if entities > 0 {
        for _ in 0..(entities + items) {
            let h = rng.gen_range(0..ent_total as u32);
            let t = rng.gen_range(0..ent_total as u32);
            if h != t {
                triples.push((h, rng.gen_range(0..relations as u32), t));
            }
        }
    }
    let kg = TripleSet::new(ent_total, relations, triples).expect("ids drawn in range");
    let alignment: Vec<(u32, u32)> = (0..items as u32).map(|i| (i, i)).collect();
    build_ckg(&inter, &kg, &alignment).expect("identity alignment")
}

pub fn random_problem(seed: u64, cfg: &GradCheckConfig) -> Result<GradProblem> {
    let ckg = random_ckg(seed, cfg.max_nodes);
    let graph = layered_expansion(&ckg, 0, cfg.depth);
    let mut mc = ModelConfig::new(cfg.dim, cfg.att_dim, cfg.depth, ckg.relation_count());
    mc.activation = cfg.activation;
    mc.attention = cfg.attention;
    let mut params = init_params(mc, seed ^ 0x5eed)?;
    // non-zero bias so attention pre-activations do not sit on the ReLU kink
    let mut rng = rng::stream(seed, &[0x4250]);
    for b in &mut params.att_bias {
        *b = rng.gen_range(-0.5..0.5);
    }
    let finals = graph.nodes(cfg.depth).to_vec();
    let mut pairs = Vec::new();
    if !finals.is_empty() {
        for _ in 0..4 {
            let p = finals[rng.gen_range(0..finals.len())];
            let n = rng.gen_range(0..ckg.node_count() as u32);
            pairs.push((p, n));
        }
    }
    Ok(GradProblem {
        ckg,
        graph,
        params,
        pairs,
    })
}

/// Summed BPR loss of the problem's pairs under `params`.
pub fn objective(problem: &GradProblem, params: &ModelParams) -> Result<f64> {
    let tape = forward(&problem.graph, params)?;
    Ok(problem
        .pairs
        .iter()
        .map(|&(p, n)| bpr_loss(tape.logit(p), tape.logit(n)).0)
        .sum())
}

/// Analytic gradient of [`objective`].
pub fn analytic_gradient(problem: &GradProblem, params: &ModelParams) -> Result<ModelParams> {
    let tape = forward(&problem.graph, params)?;
    let mut dlogits = alloc::vec![0.0; tape.final_nodes().len()];
    for &(p, n) in &problem.pairs {
        let (_, dp, dn) = bpr_loss(tape.logit(p), tape.logit(n));
        if let Some(k) = tape.final_position(p) {
            dlogits[k] += dp;
        }
        if let Some(k) = tape.final_position(n) {
            dlogits[k] += dn;
        }
    }
    backward(&tape, &problem.graph, params, &dlogits)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter coordinate.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(problem: &GradProblem, cfg: &GradCheckConfig) -> Result<f64> {
    let analytic = analytic_gradient(problem, &problem.params)?;
    let mut probe = problem.params.clone();
    let mut worst = 0.0f64;
    let tensor_count = probe.tensors().len();
    for t in 0..tensor_count {
        let len = probe.tensors()[t].len();
        for k in 0..len {
            let orig = probe.tensors()[t][k];
            probe.tensors_mut()[t][k] = orig + cfg.epsilon;
            let plus = objective(problem, &probe)?;
            probe.tensors_mut()[t][k] = orig - cfg.epsilon;
            let minus = objective(problem, &probe)?;
            probe.tensors_mut()[t][k] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let a = analytic.tensors()[t][k];
            let denom = libm::fabs(a).max(libm::fabs(numeric)).max(cfg.magnitude_floor);
            worst = worst.max(libm::fabs(a - numeric) / denom);
        }
    }
    Ok(worst)
}

/// Builds a random graph of at most `max_nodes` nodes and returns the worst
/// relative gradient error under the default configuration.
pub fn grad_check(seed: u64, max_nodes: usize) -> Result<f64> {
    let cfg = GradCheckConfig {
        max_nodes,
        ..GradCheckConfig::default()
    };
    grad_check_with(seed, &cfg)
}

pub fn grad_check_with(seed: u64, cfg: &GradCheckConfig) -> Result<f64> {
    let problem = random_problem(seed, cfg)?;
    max_relative_error(&problem, cfg)
}
