//! Command-line interface. Every command writes under `--out` and is
//! deterministic given its seeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kucnet_core::ckg::{CollaborativeKG, InteractionSet};
use kucnet_core::eval::{evaluate, rank_items, ModelScorer};
use kucnet_core::explain::{extract_explanation_with, Connectivity, DEFAULT_THRESHOLD};
use kucnet_core::model::forward;
use kucnet_core::ppr::{ppr_all_users, PprStore};
use kucnet_core::split::{split_holdout, split_new_item, split_new_user, DatasetSplit, Scenario};
use kucnet_core::subgraph::Pruning;
use kucnet_core::synthetic::{gen_synthetic, SyntheticConfig};
use kucnet_core::train::{TrainConfig, Trainer};
use serde::Serialize;

use crate::binary::{load_checkpoint, load_ppr, save_checkpoint, save_ppr, Checkpoint, PprCache};
use crate::config::{self, Sampling, TrainSettings};
use crate::dataset::Dataset;
use crate::error::{io_err, Error, Result};
use crate::exec::Rayon;
use crate::export::{explanation_dot, explanation_json, relation_names};
use crate::report::{summary_text, user_lines, EpochLine, Summary};
use crate::text::write_text;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const EVAL_USERS_FILE: &str = "eval_users.jsonl";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";
pub const EVAL_CONFIG_FILE: &str = "eval_config.json";

#[derive(Debug, Parser)]
#[command(
    name = "kucnet",
    version,
    about = "Knowledge-graph recommender over pruned user-centric subgraphs"
)]
pub struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0, env = "KUCNET_THREADS")]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-cluster dataset directory.
    GenSynthetic(GenArgs),
    /// Compute and cache personalized PageRank scores of every user.
    PreprocessPpr(PprCmd),
    /// Train a model and write a checkpoint, log and config snapshot.
    Train(TrainCmd),
    /// All-ranking recall@N and ndcg@N on the test split.
    Evaluate(EvalCmd),
    /// Top-N items for one user, training positives excluded.
    Recommend(RecommendCmd),
    /// Attention-filtered explanation subgraph for a (user, item) pair.
    Explain(ExplainCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    Traditional,
    NewItem,
    NewUser,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Traditional => Scenario::Traditional,
            ScenarioArg::NewItem => Scenario::NewItem,
            ScenarioArg::NewUser => Scenario::NewUser,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Dataset directory with train.txt, test.txt, kg_final.txt and optional alignment.txt.
    #[arg(long, env = "KUCNET_DATA")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Traditional)]
    pub scenario: ScenarioArg,
    /// Folds of the new-item and new-user scenarios.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    /// Run directory.
    #[arg(long, env = "KUCNET_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PprArgs {
    /// Restart probability.
    #[arg(long, default_value_t = 0.15)]
    pub alpha: f64,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Output dataset directory.
    #[arg(long, env = "KUCNET_DATA")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub users: usize,
    #[arg(long, default_value_t = 300)]
    pub items: usize,
    #[arg(long, default_value_t = 400)]
    pub entities: usize,
    #[arg(long, default_value_t = 5)]
    pub relations: usize,
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 7)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct PprCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    /// Recompute even if a matching cache exists.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long = "lr", default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Users per optimizer step.
    #[arg(long = "batch", default_value_t = 20)]
    pub batch_size: usize,
    /// Hidden dimension d.
    #[arg(long = "d", default_value_t = 48)]
    pub dim: usize,
    /// Attention dimension d_alpha.
    #[arg(long = "d-alpha", default_value_t = 5)]
    pub att_dim: usize,
    /// Layers L.
    #[arg(long = "L", default_value_t = 3)]
    pub depth: usize,
    /// Edges kept per head node.
    #[arg(long = "K", default_value_t = 35)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SamplingArg::Ppr)]
    pub sampling: SamplingArg,
    /// identity, tanh or relu.
    #[arg(long, default_value = "relu")]
    pub activation: String,
    #[arg(long)]
    pub no_attention: bool,
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    /// Keep the scored positives' interaction edges in the user's graph.
    #[arg(long)]
    pub keep_targets: bool,
    #[arg(long, default_value_t = 0.5)]
    pub target_fraction: f64,
    /// Hold out part of the training pairs and keep the best epoch by validation recall.
    #[arg(long)]
    pub validate: bool,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub validation_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Ppr,
    Random,
    None,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Ppr => Sampling::Ppr,
            SamplingArg::Random => Sampling::Random,
            SamplingArg::None => Sampling::None,
        }
    }
}

impl ModelArgs {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let c = TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            batch_size: self.batch_size,
            epochs: self.epochs,
            pruning: config::pruning(self.sampling.into(), self.k),
            depth: self.depth,
            dim: self.dim,
            att_dim: self.att_dim,
            activation: config::activation(&self.activation)?,
            attention: !self.no_attention,
            negatives_per_positive: self.negatives,
            exclude_targets: !self.keep_targets,
            target_fraction: self.target_fraction,
            patience: self.patience,
            validation_n: self.validation_n,
            seed: self.seed,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CheckpointArgs {
    /// Defaults to model.ckpt in the run directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Override the checkpoint's edges kept per head.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    /// Cut-off N.
    #[arg(long = "N", default_value_t = 20)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RecommendCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    #[arg(long)]
    pub user: u32,
    #[arg(long = "N", default_value_t = 20)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Dot,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub ppr: PprArgs,
    #[command(flatten)]
    pub ckpt: CheckpointArgs,
    #[arg(long)]
    pub user: u32,
    #[arg(long)]
    pub item: u32,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Keep strong edges even when their path to the item is cut.
    #[arg(long)]
    pub edges_only: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, returning what
/// would go to stdout.
pub fn run_from<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<String> {
    let exec = Rayon::new(cli.threads)?;
    match &cli.command {
        Command::GenSynthetic(a) => gen(a),
        Command::PreprocessPpr(a) => preprocess(a, &exec),
        Command::Train(a) => train(a, &exec),
        Command::Evaluate(a) => eval_cmd(a, &exec),
        Command::Recommend(a) => recommend(a, &exec),
        Command::Explain(a) => explain(a, &exec),
    }
}

fn gen(a: &GenArgs) -> Result<String> {
    let cfg = SyntheticConfig::new(a.users, a.items, a.entities, a.relations, a.clusters, a.noise, a.seed);
    let data = gen_synthetic(&cfg)?;
    let split = split_holdout(&data.interactions, a.test_fraction, a.split_seed)?;
    let ds = Dataset::new(split.train, split.test, data.kg, Some(data.alignment))?;
    ds.write(&a.out)?;
    Ok(format!(
        "wrote {}: {} train and {} test interactions, {} triples\n",
        a.out.display(),
        ds.train.len(),
        ds.test.len(),
        ds.kg.len()
    ))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(io_err(p))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(v).expect("value serializes") + "\n"),
    )
}

fn scenario_tag(d: &DataArgs) -> String {
    match d.scenario {
        ScenarioArg::Traditional => String::new(),
        s => format!(
            "-{}-f{}",
            s.to_possible_value().expect("no skipped variants").get_name(),
            d.fold
        ),
    }
}

fn ppr_path(out: &Path, d: &DataArgs, inner: bool) -> PathBuf {
    out.join(format!(
        "ppr{}{}.bin",
        scenario_tag(d),
        if inner { "-inner" } else { "" }
    ))
}

struct Prepared {
    dataset: Dataset,
    split: DatasetSplit,
}

fn prepare(d: &DataArgs) -> Result<Prepared> {
    let dataset = Dataset::load(&d.data)?;
    let split = dataset.split(d.scenario.into(), d.folds, d.fold, d.split_seed)?;
    Ok(Prepared { dataset, split })
}

/// Loads a matching PageRank cache or computes (and stores) a fresh one.
/// Returns the store and whether it was computed.
fn ppr_for(
    path: &Path,
    ds: &Dataset,
    train: &InteractionSet,
    ckg: &CollaborativeKG,
    p: &PprArgs,
    force: bool,
    exec: &Rayon,
) -> Result<(PprStore, bool)> {
    let fingerprint = ds.fingerprint(train);
    if !force && path.exists() {
        let cache = load_ppr(path)?;
        let s = &cache.store;
        if cache.fingerprint == fingerprint && s.alpha() == p.alpha && s.iterations() == p.iters && s.covers(ckg) {
            return Ok((cache.store, false));
        }
    }
    let store = ppr_all_users(ckg, p.alpha, p.iters, exec)?;
    let cache = PprCache { store, fingerprint };
    save_ppr(path, &cache)?;
    Ok((cache.store, true))
}

fn preprocess(a: &PprCmd, exec: &Rayon) -> Result<String> {
    let prep = prepare(&a.data)?;
    create_dir(&a.out.out)?;
    let ckg = prep.dataset.ckg(&prep.split.train)?;
    let path = ppr_path(&a.out.out, &a.data, false);
    let t0 = Instant::now();
    let (store, computed) = ppr_for(&path, &prep.dataset, &prep.split.train, &ckg, &a.ppr, a.force, exec)?;
    if !computed {
        return Ok(format!("ppr cache {} is up to date\n", path.display()));
    }
    Ok(format!(
        "ppr users={} nodes={} iterations={} alpha={} seconds={:.3} file={}\n",
        store.user_count(),
        store.node_count(),
        store.iterations(),
        store.alpha(),
        t0.elapsed().as_secs_f64(),
        path.display()
    ))
}

/// Inner train/validation split mirroring the scenario.
fn inner_split(split: &DatasetSplit, folds: usize, seed: u64) -> Result<DatasetSplit> {
    let inner_seed = seed ^ 0x1a2b_3c4d;
    Ok(match split.scenario {
        Scenario::Traditional => split_holdout(&split.train, 1.0 / folds.max(2) as f64, inner_seed)?,
        Scenario::NewItem => split_new_item(&split.train, folds, inner_seed)?.swap_remove(0),
        Scenario::NewUser => split_new_user(&split.train, folds, inner_seed)?.swap_remove(0),
    })
}

#[derive(Serialize)]
struct RunSnapshot<'a> {
    command: &'a str,
    kucnet_version: &'a str,
    data: &'a DataArgs,
    ppr: &'a PprArgs,
    dataset_fingerprint: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<TrainSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
}

fn train(a: &TrainCmd, exec: &Rayon) -> Result<String> {
    let cfg = a.model.train_config()?;
    let prep = prepare(&a.data)?;
    let out = &a.out.out;
    create_dir(out)?;
    let (train_set, valid) = if a.model.validate {
        let inner = inner_split(&prep.split, a.data.folds, a.data.split_seed)?;
        (inner.train, Some(inner.test))
    } else {
        (prep.split.train.clone(), None)
    };
    let ckg = prep.dataset.ckg(&train_set)?;
    let ppr = match cfg.pruning {
        Pruning::Ppr(_) => {
            let path = ppr_path(out, &a.data, valid.is_some());
            Some(ppr_for(&path, &prep.dataset, &train_set, &ckg, &a.ppr, false, exec)?.0)
        }
        _ => None,
    };
    let snapshot = RunSnapshot {
        command: "train",
        kucnet_version: env!("CARGO_PKG_VERSION"),
        data: &a.data,
        ppr: &a.ppr,
        dataset_fingerprint: prep.dataset.fingerprint(&train_set),
        train: Some(TrainSettings::from(&cfg)),
        validate: Some(a.model.validate),
        checkpoint: None,
        n: None,
    };
    write_json(&out.join(CONFIG_FILE), &snapshot)?;
    let t0 = Instant::now();
    let trainer = Trainer::new(&ckg, &train_set, ppr.as_ref(), cfg.clone())?;
    let outcome = trainer.train(valid.as_ref(), exec)?;
    let seconds = t0.elapsed().as_secs_f64();
    let log: String = outcome.log.iter().map(|r| EpochLine::new(r).to_json()).collect();
    write_text(&out.join(TRAIN_LOG_FILE), &log)?;
    let ck = Checkpoint {
        params: outcome.params,
        relations: relation_names(&ckg),
        train: Some(TrainSettings::from(&cfg)),
    };
    save_checkpoint(&out.join(CHECKPOINT_FILE), &ck)?;
    let mut s = String::new();
    for r in &outcome.log {
        s += &format!("epoch {} loss {:.6}", r.epoch, r.loss);
        if let Some(v) = r.validation_recall {
            s += &format!(" valid_recall@{} {:.6}", cfg.validation_n, v);
        }
        s.push('\n');
    }
    s += &format!("best epoch {} train seconds {:.3}\n", outcome.best_epoch, seconds);
    Ok(s)
}

struct Loaded {
    prep: Prepared,
    ckg: CollaborativeKG,
    ppr: Option<PprStore>,
    checkpoint: Checkpoint,
    pruning: Pruning,
    seed: u64,
}

fn load_model(data: &DataArgs, out: &OutArgs, p: &PprArgs, c: &CheckpointArgs, exec: &Rayon) -> Result<Loaded> {
    let path = c.checkpoint.clone().unwrap_or_else(|| out.out.join(CHECKPOINT_FILE));
    let checkpoint = load_checkpoint(&path)?;
    let prep = prepare(data)?;
    let ckg = prep.dataset.ckg(&prep.split.train)?;
    if checkpoint.params.config.relation_count != ckg.relation_count() {
        return Err(Error::Usage(format!(
            "checkpoint has {} relations, dataset has {}",
            checkpoint.params.config.relation_count,
            ckg.relation_count()
        )));
    }
    let trained = checkpoint.train.as_ref();
    let sampling = c
        .sampling
        .map(Sampling::from)
        .or(trained.map(|t| t.sampling))
        .unwrap_or(Sampling::Ppr);
    let k = c.k.or(trained.map(|t| t.k)).unwrap_or(35);
    let pruning = config::pruning(sampling, k);
    let seed = trained.map_or(0, |t| t.seed);
    create_dir(&out.out)?;
    let ppr = match pruning {
        Pruning::Ppr(_) => {
            let path = ppr_path(&out.out, data, false);
            Some(ppr_for(&path, &prep.dataset, &prep.split.train, &ckg, p, false, exec)?.0)
        }
        _ => None,
    };
    Ok(Loaded {
        prep,
        ckg,
        ppr,
        checkpoint,
        pruning,
        seed,
    })
}

impl Loaded {
    fn scorer(&self) -> ModelScorer<'_> {
        ModelScorer {
            params: &self.checkpoint.params,
            ckg: &self.ckg,
            ppr: self.ppr.as_ref(),
            pruning: self.pruning,
            seed: self.seed,
        }
    }

    fn check_user(&self, user: u32) -> Result<()> {
        if user as usize >= self.ckg.user_count() {
            return Err(Error::Usage(format!(
                "user {user} out of range ({} users)",
                self.ckg.user_count()
            )));
        }
        Ok(())
    }
}

fn eval_cmd(a: &EvalCmd, exec: &Rayon) -> Result<String> {
    let m = load_model(&a.data, &a.out, &a.ppr, &a.ckpt, exec)?;
    let report = evaluate(&m.scorer(), &m.prep.split.train, &m.prep.split.test, a.n, exec)?;
    let out = &a.out.out;
    let snapshot = RunSnapshot {
        command: "evaluate",
        kucnet_version: env!("CARGO_PKG_VERSION"),
        data: &a.data,
        ppr: &a.ppr,
        dataset_fingerprint: m.prep.dataset.fingerprint(&m.prep.split.train),
        train: m.checkpoint.train.clone(),
        validate: None,
        checkpoint: a.ckpt.checkpoint.as_deref(),
        n: Some(a.n),
    };
    write_json(&out.join(EVAL_CONFIG_FILE), &snapshot)?;
    write_text(&out.join(EVAL_USERS_FILE), &user_lines(&report))?;
    write_text(&out.join(EVAL_SUMMARY_FILE), &Summary::new(&report).to_json())?;
    Ok(summary_text(&report))
}

fn recommend(a: &RecommendCmd, exec: &Rayon) -> Result<String> {
    use kucnet_core::eval::Scorer;
    let m = load_model(&a.data, &a.out, &a.ppr, &a.ckpt, exec)?;
    m.check_user(a.user)?;
    let scores = m.scorer().scores(a.user)?;
    let seen = m.prep.split.train.items_by_user();
    let exclude = seen.get(a.user as usize).map_or(&[][..], |v| &v[..]);
    let ranked = rank_items(&scores, exclude, None);
    let mut s = String::from("rank\titem\tscore\n");
    for (r, &i) in ranked.iter().take(a.n).enumerate() {
        s += &format!("{}\t{}\t{:.6}\n", r + 1, i, scores[i as usize]);
    }
    Ok(s)
}

fn explain(a: &ExplainCmd, exec: &Rayon) -> Result<String> {
    let m = load_model(&a.data, &a.out, &a.ppr, &a.ckpt, exec)?;
    m.check_user(a.user)?;
    if a.item as usize >= m.ckg.item_count() {
        return Err(Error::Usage(format!(
            "item {} out of range ({} items)",
            a.item,
            m.ckg.item_count()
        )));
    }
    let graph = m.scorer().graph(a.user)?;
    let tape = forward(&graph, &m.checkpoint.params)?;
    let mode = if a.edges_only {
        Connectivity::EdgesOnly
    } else {
        Connectivity::Paths
    };
    let e = extract_explanation_with(&tape, &graph, m.ckg.item_node(a.item), a.threshold, mode);
    let text = match a.format {
        FormatArg::Json => explanation_json(&e, &m.ckg) + "\n",
        FormatArg::Dot => explanation_dot(&e, &m.ckg),
    };
    match &a.output {
        Some(p) => {
            write_text(p, &text)?;
            Ok(format!("{} edges written to {}\n", e.edges.len(), p.display()))
        }
        None => Ok(text),
    }
}
