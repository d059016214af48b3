//! Pairwise ranking loss, negative sampling, Adam, and the epoch loop.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ckg::{CollaborativeKG, InteractionSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ModelScorer};
use crate::exec::Executor;
use crate::model::{backward, forward_with, init_params, Activation, ModelConfig, ModelParams};
use crate::ppr::PprStore;
use crate::rng;
use crate::subgraph::{user_graph, Pruning};

/// `-ln sigmoid(pos - neg)` and its partial derivatives.
pub fn bpr_loss(pos: f64, neg: f64) -> (f64, f64, f64) {
    let x = pos - neg;
    // softplus(-x), written so that neither branch overflows
    let loss = if x >= 0.0 {
        libm::log1p(libm::exp(-x))
    } else {
        -x + libm::log1p(libm::exp(x))
    };
    let s = if x >= 0.0 {
        let e = libm::exp(-x);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(x))
    };
    (loss, -s, s)
}

/// Draws `n` items uniformly from those not in `positives` (sorted), by
/// rejection.
pub fn sample_negatives<R: Rng + ?Sized>(
    positives: &[u32],
    item_count: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if positives.len() >= item_count {
        return Err(Error::Sampling(format!("user interacted with all {item_count} items")));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let j = rng.gen_range(0..item_count as u32);
        if positives.binary_search(&j).is_err() {
            out.push(j);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: ModelParams,
    second: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    /// One update. Weight decay shrinks parameters by `1 - lr * wd` before the
    /// bias-corrected Adam delta is applied.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, weight_decay: f64) -> Result<()> {
        if params.config != self.first.config || grads.config != params.config {
            return Err(Error::Contract("optimizer state shaped for another model".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradients at step {}", self.step + 1)));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        let decay = 1.0 - lr * weight_decay;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut());
        for (((p, g), m), v) in tensors {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p[k] = p[k] * decay - lr * mhat / (libm::sqrt(vhat) + eps);
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after step {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Users per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub pruning: Pruning,
    pub depth: usize,
    pub dim: usize,
    pub att_dim: usize,
    pub activation: Activation,
    pub attention: bool,
    pub negatives_per_positive: usize,
    /// Hide the scored positives' interaction edges from the user's graph.
    pub exclude_targets: bool,
    /// Share of a user's positives scored per visit when `exclude_targets`
    /// is on; the rest stay in the graph as context.
    pub target_fraction: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    /// Cut-off for validation recall.
    pub validation_n: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            dropout: 0.0,
            batch_size: 20,
            epochs: 30,
            pruning: Pruning::Ppr(35),
            depth: 3,
            dim: 48,
            att_dim: 5,
            activation: Activation::Relu,
            attention: true,
            negatives_per_positive: 1,
            exclude_targets: true,
            target_fraction: 0.5,
            patience: None,
            validation_n: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Rejects values no training run can use.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(String::from(what)));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.depth == 0 || self.dim == 0 || self.att_dim == 0 {
            return bad("batch size, depth, dim and att_dim must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("need at least one negative per positive");
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return bad("target fraction must lie in (0, 1]");
        }
        if matches!(self.pruning, Pruning::Ppr(0) | Pruning::Random(0)) {
            return bad("K must be at least 1");
        }
        Ok(())
    }

    /// Values outside the commonly tuned ranges; legal but worth a note.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(1e-6..=1e-2).contains(&self.learning_rate) {
            out.push(format!("learning rate {} outside [1e-6, 1e-2]", self.learning_rate));
        }
        if !(1e-5..=1e-2).contains(&self.weight_decay) {
            out.push(format!("weight decay {} outside [1e-5, 1e-2]", self.weight_decay));
        }
        if self.dropout > 0.2 {
            out.push(format!("dropout {} above 0.2", self.dropout));
        }
        out
    }

    pub fn model_config(&self, relation_count: usize) -> ModelConfig {
        let mut c = ModelConfig::new(self.dim, self.att_dim, self.depth, relation_count);
        c.activation = self.activation;
        c.attention = self.attention;
        c
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean BPR loss per (user, positive, negative) triple.
    pub loss: f64,
    pub triples: usize,
    pub validation_recall: Option<f64>,
    pub validation_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
}

/// Loss and gradient contribution of one user visit.
struct UserStep {
    loss: f64,
    triples: usize,
    grads: Option<ModelParams>,
}

pub struct Trainer<'a> {
    pub ckg: &'a CollaborativeKG,
    pub train: &'a InteractionSet,
    pub ppr: Option<&'a PprStore>,
    pub config: TrainConfig,
    positives: Vec<Vec<u32>>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        ckg: &'a CollaborativeKG,
        train: &'a InteractionSet,
        ppr: Option<&'a PprStore>,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if train.user_count() > ckg.user_count() || train.item_count() > ckg.item_count() {
            return Err(Error::Config("training pairs exceed the graph's id space".into()));
        }
        if let Pruning::Ppr(_) = config.pruning {
            match ppr {
                Some(store) if store.covers(ckg) => {}
                _ => return Err(Error::Config("PageRank store does not cover the graph's users".into())),
            }
        }
        let mut positives = train.items_by_user();
        positives.resize(ckg.user_count(), Vec::new());
        Ok(Self {
            ckg,
            train,
            ppr,
            config,
            positives,
        })
    }

    pub fn init(&self) -> Result<ModelParams> {
        init_params(self.config.model_config(self.ckg.relation_count()), self.config.seed)
    }

    /// Users with at least one positive and one non-positive item.
    pub fn trainable_users(&self) -> Vec<u32> {
        (0..self.ckg.user_count() as u32)
            .filter(|&u| {
                let n = self.positives[u as usize].len();
                n > 0 && n < self.ckg.item_count()
            })
            .collect()
    }

    fn user_step(&self, params: &ModelParams, epoch: usize, user: u32) -> Result<UserStep> {
        let cfg = &self.config;
        let mut rng = rng::stream(cfg.seed, &[0x5452, epoch as u64, user as u64]);
        let positives = &self.positives[user as usize];
        let mut targets = positives.clone();
        if cfg.exclude_targets && cfg.target_fraction < 1.0 {
            targets.shuffle(&mut rng);
            let t = libm::ceil(cfg.target_fraction * positives.len() as f64) as usize;
            targets.truncate(t.clamp(1, positives.len()));
            targets.sort_unstable();
        }
        let hidden: &[u32] = if cfg.exclude_targets { &targets } else { &[] };
        let scores = self.ppr.map(|p| p.scores(user));
        let prune_rng = rng::stream(cfg.seed, &[0x5052, epoch as u64, user as u64]);
        let graph = user_graph(self.ckg, user, cfg.depth, cfg.pruning, scores, hidden, prune_rng)?;
        let tape = forward_with(&graph, params, cfg.dropout, &mut rng)?;
        let mut dlogits = vec![0.0; tape.final_nodes().len()];
        let mut loss = 0.0;
        let mut triples = 0;
        for &i in &targets {
            let pos_node = self.ckg.item_node(i);
            let pos = tape.logit(pos_node);
            for j in sample_negatives(positives, self.ckg.item_count(), cfg.negatives_per_positive, &mut rng)? {
                let neg_node = self.ckg.item_node(j);
                let (l, dp, dn) = bpr_loss(pos, tape.logit(neg_node));
                loss += l;
                triples += 1;
                if let Some(k) = tape.final_position(pos_node) {
                    dlogits[k] += dp;
                }
                if let Some(k) = tape.final_position(neg_node) {
                    dlogits[k] += dn;
                }
            }
        }
        let grads = if dlogits.iter().any(|&g| g != 0.0) {
            Some(backward(&tape, &graph, params, &dlogits)?)
        } else {
            None
        };
        Ok(UserStep { loss, triples, grads })
    }

    /// One pass over the trainable users. Returns the epoch's mean loss and
    /// triple count.
    pub fn run_epoch<E: Executor>(
        &self,
        params: &mut ModelParams,
        adam: &mut AdamState,
        epoch: usize,
        exec: &E,
    ) -> Result<(f64, usize)> {
        let cfg = &self.config;
        let mut users = self.trainable_users();
        users.shuffle(&mut rng::stream(cfg.seed, &[0x4550, epoch as u64]));
        let mut loss = 0.0;
        let mut triples = 0;
        for batch in users.chunks(cfg.batch_size) {
            let shared: &ModelParams = params;
            let steps = exec.map(batch.len(), |b| self.user_step(shared, epoch, batch[b]));
            let mut grads = params.zeros_like();
            for step in steps {
                let step = step?;
                loss += step.loss;
                triples += step.triples;
                if let Some(g) = step.grads {
                    grads.add_scaled(&g, 1.0);
                }
            }
            adam.step(params, &grads, cfg.learning_rate, cfg.weight_decay)?;
        }
        let mean = if triples == 0 { 0.0 } else { loss / triples as f64 };
        Ok((mean, triples))
    }

    /// Full training run. With a validation set, the parameters of the epoch
    /// with the best validation recall are returned; otherwise the last.
    pub fn train<E: Executor>(&self, validation: Option<&InteractionSet>, exec: &E) -> Result<TrainOutcome> {
        let mut params = self.init()?;
        self.train_from(&mut params, validation, exec)
    }

    pub fn train_from<E: Executor>(
        &self,
        params: &mut ModelParams,
        validation: Option<&InteractionSet>,
        exec: &E,
    ) -> Result<TrainOutcome> {
        let cfg = &self.config;
        let mut adam = AdamState::new(params);
        let mut log = Vec::with_capacity(cfg.epochs);
        let mut best: Option<(f64, usize, ModelParams)> = None;
        let mut since_best = 0usize;
        for epoch in 1..=cfg.epochs {
            let (loss, triples) = self.run_epoch(params, &mut adam, epoch, exec)?;
            let mut record = EpochRecord {
                epoch,
                loss,
                triples,
                validation_recall: None,
                validation_ndcg: None,
            };
            if let Some(valid) = validation {
                let scorer = ModelScorer {
                    params,
                    ckg: self.ckg,
                    ppr: self.ppr,
                    pruning: cfg.pruning,
                    seed: cfg.seed,
                };
                let report = evaluate(&scorer, self.train, valid, cfg.validation_n, exec)?;
                record.validation_recall = Some(report.mean_recall);
                record.validation_ndcg = Some(report.mean_ndcg);
                if best.as_ref().is_none_or(|b| report.mean_recall > b.0) {
                    best = Some((report.mean_recall, epoch, params.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                }
            }
            log.push(record);
            if cfg.patience.is_some_and(|p| validation.is_some() && since_best >= p) {
                break;
            }
        }
        let last_epoch = log.last().map_or(0, |r| r.epoch);
        Ok(match best {
            Some((_, epoch, p)) => TrainOutcome {
                params: p,
                log,
                best_epoch: epoch,
            },
            None => TrainOutcome {
                params: params.clone(),
                log,
                best_epoch: last_epoch,
            },
        })
    }
}
