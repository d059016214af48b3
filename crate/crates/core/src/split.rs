//! Train/test splits for the traditional, new-item and new-user scenarios.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::ckg::InteractionSet;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Every test item also appears in training.
    Traditional,
    /// Test items have no training interactions.
    NewItem,
    /// Test users have no training interactions.
    NewUser,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: InteractionSet,
    pub test: InteractionSet,
    pub scenario: Scenario,
    pub fold: usize,
}

impl DatasetSplit {
    /// Checks the scenario's disjointness invariant.
    pub fn check(&self) -> Result<()> {
        let ok = match self.scenario {
            Scenario::Traditional => {
                let train_items = self.train.items();
                self.test.items().iter().all(|i| train_items.contains(i))
            }
            Scenario::NewItem => self.train.items().is_disjoint(&self.test.items()),
            Scenario::NewUser => self.train.users().is_disjoint(&self.test.users()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("{:?} split invariant violated", self.scenario)))
        }
    }
}

/// K-fold split over items: fold `k` tests on every pair whose item falls in
/// the `k`-th random item group.
pub fn split_new_item(inter: &InteractionSet, folds: usize, seed: u64) -> Result<Vec<DatasetSplit>> {
    let groups = partition(inter.item_count(), folds, seed, "items")?;
    Ok(fold_splits(inter, &groups, folds, Scenario::NewItem, |p| p.1))
}

/// K-fold split over users, as [`split_new_item`] with users in place of items.
pub fn split_new_user(inter: &InteractionSet, folds: usize, seed: u64) -> Result<Vec<DatasetSplit>> {
    let groups = partition(inter.user_count(), folds, seed, "users")?;
    Ok(fold_splits(inter, &groups, folds, Scenario::NewUser, |p| p.0))
}

/// Per-user random holdout for the traditional scenario.
///
/// Each user with at least two pairs sends `round(test_fraction * n)` of them
/// (at least one, at most `n - 1`) to the test set. Test pairs whose item would
/// be missing from training are moved back to training.
pub fn split_holdout(inter: &InteractionSet, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0,1)")));
    }
    let mut rng = rng::stream(seed, &[0x4855]);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (u, items) in inter.items_by_user().into_iter().enumerate() {
        let mut items = items;
        items.shuffle(&mut rng);
        let n = items.len();
        let k = if n < 2 {
            0
        } else {
            (libm::round(test_fraction * n as f64) as usize).clamp(1, n - 1)
        };
        for (j, &i) in items.iter().enumerate() {
            if j < k {
                test.push((u as u32, i));
            } else {
                train.push((u as u32, i));
            }
        }
    }
    let mut in_train = alloc::vec![false; inter.item_count()];
    for &(_, i) in &train {
        in_train[i as usize] = true;
    }
    let (moved, kept): (Vec<_>, Vec<_>) = test.into_iter().partition(|p| !in_train[p.1 as usize]);
    train.extend(moved);
    let split = DatasetSplit {
        train: inter.with_pairs(train),
        test: inter.with_pairs(kept),
        scenario: Scenario::Traditional,
        fold: 0,
    };
    split.check()?;
    Ok(split)
}

/// Random group index for each of `n` ids; group sizes differ by at most one.
fn partition(n: usize, folds: usize, seed: u64, what: &str) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("folds must be at least 2, got {folds}")));
    }
    if n < folds {
        return Err(Error::Config(format!("{n} {what} cannot fill {folds} folds")));
    }
    let mut rng = rng::stream(seed, &[0x4b46, folds as u64]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut group = alloc::vec![0usize; n];
    for (pos, &id) in order.iter().enumerate() {
        group[id] = pos % folds;
    }
    Ok(group)
}

fn fold_splits(
    inter: &InteractionSet,
    group: &[usize],
    folds: usize,
    scenario: Scenario,
    key: impl Fn(&(u32, u32)) -> u32,
) -> Vec<DatasetSplit> {
    (0..folds)
        .map(|k| {
            let (test, train): (Vec<_>, Vec<_>) = inter.pairs().iter().partition(|p| group[key(p) as usize] == k);
            DatasetSplit {
                train: inter.with_pairs(train),
                test: inter.with_pairs(test),
                scenario,
                fold: k,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn toy() -> InteractionSet {
        // 20 pairs over 10 users and 10 items
        let pairs = (0..20u32).map(|k| (k % 10, (k * 7 + k / 10) % 10)).collect();
        InteractionSet::new(10, 10, pairs).unwrap()
    }

    #[test]
    fn new_item_folds_cover_and_are_disjoint() {
        let inter = toy();
        assert_eq!(inter.len(), 20);
        let folds = split_new_item(&inter, 5, 3).unwrap();
        let mut seen = BTreeSet::new();
        let mut items_per_fold = vec![];
        for s in &folds {
            s.check().unwrap();
            for p in s.test.pairs() {
                assert!(seen.insert(*p), "pair in two test folds");
            }
            assert_eq!(s.train.len() + s.test.len(), 20);
            items_per_fold.push(s.test.items().len());
        }
        assert_eq!(seen.len(), 20);
        // each group holds two of the ten items; every item has interactions here
        assert!(items_per_fold.iter().all(|&n| n == 2));
    }

    #[test]
    fn new_user_folds_have_two_users_each() {
        let inter = toy();
        for s in split_new_user(&inter, 5, 11).unwrap() {
            s.check().unwrap();
            assert_eq!(s.test.users().len(), 2);
            assert!(s.test.users().is_disjoint(&s.train.users()));
        }
    }

    #[test]
    fn same_seed_same_partition() {
        let inter = toy();
        assert_eq!(
            split_new_item(&inter, 5, 9).unwrap(),
            split_new_item(&inter, 5, 9).unwrap()
        );
        assert_eq!(
            split_new_user(&inter, 5, 9).unwrap(),
            split_new_user(&inter, 5, 9).unwrap()
        );
    }

    #[test]
    fn too_few_items_is_a_config_error() {
        let inter = InteractionSet::from_pairs(vec![(0, 0), (1, 1)]);
        assert!(matches!(split_new_item(&inter, 5, 0), Err(Error::Config(_))));
        assert!(matches!(split_new_item(&inter, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn holdout_keeps_test_items_in_training() {
        let inter = toy();
        let s = split_holdout(&inter, 0.5, 1).unwrap();
        s.check().unwrap();
        assert_eq!(s.train.len() + s.test.len(), inter.len());
    }
}
