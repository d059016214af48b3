//! Dataset directories: `train.txt`, `test.txt`, `kg_final.txt` and an
//! optional `alignment.txt` (identity item-to-entity alignment when absent).

use std::fs;
use std::path::Path;

use kucnet_core::ckg::{build_ckg, CollaborativeKG, InteractionSet, TripleSet};
use kucnet_core::split::{split_new_item, split_new_user, DatasetSplit, Scenario};

use crate::error::{io_err, Error, Result};
use crate::text;

pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";
pub const KG_FILE: &str = "kg_final.txt";
pub const ALIGNMENT_FILE: &str = "alignment.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: InteractionSet,
    pub test: InteractionSet,
    pub kg: TripleSet,
    pub alignment: Vec<(u32, u32)>,
}

impl Dataset {
    /// Brings every part onto common user, item and entity counts.
    pub fn new(
        train: InteractionSet,
        test: InteractionSet,
        kg: TripleSet,
        alignment: Option<Vec<(u32, u32)>>,
    ) -> Result<Self> {
        let users = train.user_count().max(test.user_count());
        let mut items = train.item_count().max(test.item_count());
        let alignment = match alignment {
            Some(a) => {
                items = items.max(a.iter().map(|p| p.0 as usize + 1).max().unwrap_or(0));
                a
            }
            None => (0..items as u32).map(|i| (i, i)).collect(),
        };
        let entities = alignment
            .iter()
            .map(|p| p.1 as usize + 1)
            .max()
            .unwrap_or(0)
            .max(kg.entity_count());
        Ok(Self {
            train: InteractionSet::new(users, items, train.pairs().to_vec())?,
            test: InteractionSet::new(users, items, test.pairs().to_vec())?,
            kg: TripleSet::new(entities, kg.relation_count(), kg.triples().to_vec())?,
            alignment,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let train = text::load_interactions(&dir.join(TRAIN_FILE))?;
        let test_path = dir.join(TEST_FILE);
        let test = if test_path.exists() {
            match text::load_interactions(&test_path) {
                Err(Error::Core(kucnet_core::Error::EmptyDataset)) => InteractionSet::new(0, 0, vec![])?,
                other => other?,
            }
        } else {
            InteractionSet::new(0, 0, vec![])?
        };
        let kg = text::load_kg(&dir.join(KG_FILE))?;
        let align_path = dir.join(ALIGNMENT_FILE);
        let alignment = if align_path.exists() {
            Some(text::load_alignment(&align_path)?)
        } else {
            None
        };
        Self::new(train, test, kg, alignment)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        text::write_text(&dir.join(TRAIN_FILE), &text::format_interactions(&self.train))?;
        text::write_text(&dir.join(TEST_FILE), &text::format_interactions(&self.test))?;
        text::write_text(&dir.join(KG_FILE), &text::format_kg(&self.kg))?;
        text::write_text(&dir.join(ALIGNMENT_FILE), &text::format_alignment(&self.alignment))
    }

    /// Train/test pairs for a scenario. The traditional scenario uses the
    /// files as given; the k-fold scenarios re-split their union.
    pub fn split(&self, scenario: Scenario, folds: usize, fold: usize, seed: u64) -> Result<DatasetSplit> {
        if scenario == Scenario::Traditional {
            return Ok(DatasetSplit {
                train: self.train.clone(),
                test: self.test.clone(),
                scenario,
                fold: 0,
            });
        }
        if fold >= folds {
            return Err(Error::Usage(format!("fold {fold} out of range for {folds} folds")));
        }
        let all = self.train.union(&self.test);
        let mut splits = match scenario {
            Scenario::NewItem => split_new_item(&all, folds, seed)?,
            _ => split_new_user(&all, folds, seed)?,
        };
        Ok(splits.swap_remove(fold))
    }

    pub fn ckg(&self, train: &InteractionSet) -> Result<CollaborativeKG> {
        Ok(build_ckg(train, &self.kg, &self.alignment)?)
    }

    /// Hash of everything the collaborative KG built on `train` depends on.
    pub fn fingerprint(&self, train: &InteractionSet) -> u64 {
        let mut h = Fnv::default();
        for n in [
            train.user_count(),
            train.item_count(),
            self.kg.entity_count(),
            self.kg.relation_count(),
        ] {
            h.u64(n as u64);
        }
        h.u64(train.len() as u64);
        for &(u, i) in train.pairs() {
            h.u64(((u as u64) << 32) | i as u64);
        }
        h.u64(self.kg.len() as u64);
        for &(a, r, b) in self.kg.triples() {
            h.u64(a as u64);
            h.u64(((r as u64) << 32) | b as u64);
        }
        h.u64(self.alignment.len() as u64);
        for &(i, e) in &self.alignment {
            h.u64(((i as u64) << 32) | e as u64);
        }
        h.0
    }
}

/// 64-bit FNV-1a.
struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}
