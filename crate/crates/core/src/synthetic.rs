//! Planted-cluster dataset generator.
//!
//! Users, items and attribute entities receive latent cluster labels. Item `i`
//! is aligned to entity `i`; entities `items..entities` are attributes.
//! Relation `0` links each item to attributes of its own cluster, every
//! further relation links items to attributes drawn without regard to
//! clusters, so only relation `0` carries preference signal. Each user favours
//! a few attributes of their cluster and interacts mostly with items carrying
//! them, then with the rest of the cluster; a `noise` share of interactions
//! is drawn from all items.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ckg::{InteractionSet, TripleSet};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    /// Total entities, `items` of which are aligned to items.
    pub entities: usize,
    pub relations: usize,
    pub clusters: usize,
    /// Fraction of each user's interactions drawn uniformly from all items.
    pub noise: f64,
    pub seed: u64,
    /// Inclusive range of interactions per user.
    pub interactions_per_user: (usize, usize),
    /// Attribute links per item under the cluster-aligned relation.
    pub informative_links: usize,
    /// Attributes of their cluster each user favours; within-cluster
    /// interactions go to items carrying them first. Zero draws uniformly
    /// from the cluster.
    pub taste_attributes: usize,
}

impl SyntheticConfig {
    pub fn new(
        users: usize,
        items: usize,
        entities: usize,
        relations: usize,
        clusters: usize,
        noise: f64,
        seed: u64,
    ) -> Self {
        Self {
            users,
            items,
            entities,
            relations,
            clusters,
            noise,
            seed,
            interactions_per_user: (4, 8),
            informative_links: 4,
            taste_attributes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub interactions: InteractionSet,
    pub kg: TripleSet,
    /// `(item, entity)` pairs.
    pub alignment: Vec<(u32, u32)>,
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
    pub attribute_cluster: Vec<usize>,
}

impl SyntheticData {
    /// Fraction of interactions whose user and item share a cluster.
    pub fn cluster_agreement(&self) -> f64 {
        let pairs = self.interactions.pairs();
        if pairs.is_empty() {
            return 1.0;
        }
        let agree = pairs
            .iter()
            .filter(|&&(u, i)| self.user_cluster[u as usize] == self.item_cluster[i as usize])
            .count();
        agree as f64 / pairs.len() as f64
    }
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    let c = cfg.clusters;
    if c < 2 {
        return Err(Error::Config(format!("need at least 2 clusters, got {c}")));
    }
    if !(0.0..1.0).contains(&cfg.noise) {
        return Err(Error::Config(format!("noise {} outside [0,1)", cfg.noise)));
    }
    if c > cfg.items || c > cfg.users {
        return Err(Error::Config(format!(
            "{c} clusters exceed {} users or {} items",
            cfg.users, cfg.items
        )));
    }
    let attributes = cfg.entities.saturating_sub(cfg.items);
    if cfg.entities < cfg.items || attributes < c {
        return Err(Error::Config(format!(
            "{} entities leave fewer than {c} attribute entities after aligning {} items",
            cfg.entities, cfg.items
        )));
    }
    if cfg.relations == 0 {
        return Err(Error::Config("need at least one relation".into()));
    }
    let (lo, hi) = cfg.interactions_per_user;
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!("bad interactions per user range {lo}..={hi}")));
    }

    let mut rng = rng::stream(cfg.seed, &[0x5359]);
    let user_cluster = balanced_labels(cfg.users, c, &mut rng);
    let item_cluster = balanced_labels(cfg.items, c, &mut rng);
    let attribute_cluster = balanced_labels(attributes, c, &mut rng);

    let mut members: Vec<Vec<u32>> = alloc::vec![Vec::new(); c];
    for (i, &k) in item_cluster.iter().enumerate() {
        members[k].push(i as u32);
    }
    let mut attr_members: Vec<Vec<u32>> = alloc::vec![Vec::new(); c];
    for (a, &k) in attribute_cluster.iter().enumerate() {
        attr_members[k].push(a as u32);
    }

    let attr_entity = |a: u32| cfg.items as u32 + a;
    let mut triples = Vec::new();
    for (i, &k) in item_cluster.iter().enumerate() {
        for _ in 0..cfg.informative_links {
            let a = if rng.gen::<f64>() < cfg.noise {
                rng.gen_range(0..attributes as u32)
            } else {
                *attr_members[k]
                    .choose(&mut rng)
                    .expect("each cluster owns an attribute")
            };
            triples.push((i as u32, 0, attr_entity(a)));
        }
        for r in 1..cfg.relations {
            let a = rng.gen_range(0..attributes as u32);
            triples.push((i as u32, r as u32, attr_entity(a)));
        }
    }
    let kg = TripleSet::new(cfg.entities, cfg.relations, triples)?;

    // items of each cluster carrying each attribute under relation 0
    let mut carriers: Vec<Vec<u32>> = alloc::vec![Vec::new(); attributes];
    for &(i, r, a) in kg.triples() {
        if r == 0 && item_cluster[i as usize] == attribute_cluster[(a - cfg.items as u32) as usize] {
            carriers[(a - cfg.items as u32) as usize].push(i);
        }
    }
    let mut pairs = Vec::new();
    for (u, &k) in user_cluster.iter().enumerate() {
        let want = rng.gen_range(lo..=hi);
        let pool = &members[k];
        // stochastic rounding keeps the expected noisy share at `noise`
        let expected = cfg.noise * want as f64;
        let mut noisy = libm::floor(expected) as usize;
        if rng.gen::<f64>() < expected - noisy as f64 {
            noisy += 1;
        }
        let within = (want - noisy).min(pool.len());
        let mut preferred: Vec<u32> = attr_members[k]
            .choose_multiple(&mut rng, cfg.taste_attributes)
            .flat_map(|&a| carriers[a as usize].iter().copied())
            .collect();
        preferred.sort_unstable();
        preferred.dedup();
        let mut chosen: Vec<u32> = preferred.choose_multiple(&mut rng, within).copied().collect();
        if chosen.len() < within {
            let mut rest: Vec<u32> = pool.iter().copied().filter(|i| !chosen.contains(i)).collect();
            rest.shuffle(&mut rng);
            rest.truncate(within - chosen.len());
            chosen.extend(rest);
        }
        let mut guard = 0;
        while chosen.len() < within + noisy && guard < 64 * cfg.items {
            let i = rng.gen_range(0..cfg.items as u32);
            if !chosen.contains(&i) {
                chosen.push(i);
            }
            guard += 1;
        }
        pairs.extend(chosen.into_iter().map(|i| (u as u32, i)));
    }
    let interactions = InteractionSet::new(cfg.users, cfg.items, pairs)?;

    let alignment = (0..cfg.items as u32).map(|i| (i, i)).collect();

    Ok(SyntheticData {
        interactions,
        kg,
        alignment,
        user_cluster,
        item_cluster,
        attribute_cluster,
    })
}

fn balanced_labels(n: usize, c: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|k| k % c).collect();
    labels.shuffle(rng);
    labels
}
