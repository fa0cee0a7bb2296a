use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetIndex, IngestError};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    LeaveOneOut,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

/// Train/validation/test partition of interaction ids (indices into
/// [`DatasetIndex::interactions`]), each list ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub kind: SplitKind,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Users left out of a leave-one-out split for having fewer than 3 interactions.
    pub dropped_users: usize,
}

impl DatasetSplits {
    /// Split membership per interaction id; `None` for interactions not retained.
    pub fn membership(&self, interaction_count: usize) -> Vec<Option<SplitName>> {
        let mut out = vec![None; interaction_count];
        for (name, ids) in [
            (SplitName::Train, &self.train),
            (SplitName::Validation, &self.validation),
            (SplitName::Test, &self.test),
        ] {
            for &id in ids {
                out[id] = Some(name);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Last interaction to test, second-to-last to validation, the rest to train.
pub fn split_leave_one_out(index: &DatasetIndex) -> Result<DatasetSplits, IngestError> {
    let mut splits = DatasetSplits {
        kind: SplitKind::LeaveOneOut,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        dropped_users: 0,
    };
    for seq in &index.per_user_sequence {
        let len = seq.len();
        if len < 3 {
            splits.dropped_users += 1;
            continue;
        }
        splits.train.extend_from_slice(&seq[..len - 2]);
        splits.validation.push(seq[len - 2]);
        splits.test.push(seq[len - 1]);
    }
    if splits.test.is_empty() {
        return Err(IngestError::NoEligibleUsers);
    }
    if splits.dropped_users > 0 {
        warn!(
            "leave-one-out: dropped {} users with fewer than 3 interactions",
            splits.dropped_users
        );
    }
    splits.train.sort_unstable();
    splits.validation.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// Seeded shuffle, ratio assignment, then coverage repair so that every user
/// and item has at least one training interaction.
///
/// Repair visits users then items in index order. An uncovered entity pulls
/// its earliest-shuffled validation/test interaction into train; to keep the
/// split sizes, the latest-shuffled train interaction whose user and item both
/// keep another training instance is sent back in exchange, when one exists.
pub fn split_random(
    index: &DatasetIndex,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplits, IngestError> {
    let (r_train, r_val, r_test) = ratios;
    if [r_train, r_val, r_test].iter().any(|r| !r.is_finite() || *r < 0.0)
        || (r_train + r_val + r_test - 1.0).abs() > 1e-9
    {
        return Err(IngestError::BadRatios(ratios));
    }
    let total = index.interactions.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng::seeded(seed));

    let n_train = ((r_train * total as f64).round() as usize).min(total);
    let n_val = ((r_val * total as f64).round() as usize).min(total - n_train);

    // position in the shuffled order, and current split of each interaction
    let mut position = vec![0usize; total];
    for (p, &id) in order.iter().enumerate() {
        position[id] = p;
    }
    let mut split: Vec<SplitName> = vec![SplitName::Test; total];
    for (p, &id) in order.iter().enumerate() {
        split[id] = if p < n_train {
            SplitName::Train
        } else if p < n_train + n_val {
            SplitName::Validation
        } else {
            SplitName::Test
        };
    }

    let m = index.user_count();
    let mut user_train = vec![0usize; m];
    let mut item_train = vec![0usize; index.item_count()];
    let mut by_entity: Vec<Vec<usize>> = vec![Vec::new(); index.entity_count()];
    for (id, it) in index.interactions.iter().enumerate() {
        by_entity[it.user as usize].push(id);
        by_entity[m + it.item as usize].push(id);
        if split[id] == SplitName::Train {
            user_train[it.user as usize] += 1;
            item_train[it.item as usize] += 1;
        }
    }

    for entity in 0..index.entity_count() {
        let covered = if entity < m {
            user_train[entity] > 0
        } else {
            item_train[entity - m] > 0
        };
        if covered {
            continue;
        }
        let Some(&pulled) = by_entity[entity]
            .iter()
            .filter(|&&id| split[id] != SplitName::Train)
            .min_by_key(|&&id| position[id])
        else {
            continue;
        };
        let from = split[pulled];
        split[pulled] = SplitName::Train;
        let it = index.interactions[pulled];
        user_train[it.user as usize] += 1;
        item_train[it.item as usize] += 1;

        let giveback = order.iter().rev().copied().find(|&id| {
            let c = index.interactions[id];
            id != pulled
                && split[id] == SplitName::Train
                && user_train[c.user as usize] >= 2
                && item_train[c.item as usize] >= 2
        });
        if let Some(id) = giveback {
            split[id] = from;
            let c = index.interactions[id];
            user_train[c.user as usize] -= 1;
            item_train[c.item as usize] -= 1;
        }
    }

    let mut uncovered = Vec::new();
    for (u, &c) in user_train.iter().enumerate() {
        if c == 0 {
            uncovered.push(format!("user {}", index.user_names[u]));
        }
    }
    for (i, &c) in item_train.iter().enumerate() {
        if c == 0 {
            uncovered.push(format!("item {}", index.item_names[i]));
        }
    }
    if !uncovered.is_empty() {
        return Err(IngestError::Uncovered(uncovered));
    }

    let mut splits = DatasetSplits {
        kind: SplitKind::Random,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        dropped_users: 0,
    };
    for (id, s) in split.into_iter().enumerate() {
        match s {
            SplitName::Train => splits.train.push(id),
            SplitName::Validation => splits.validation.push(id),
            SplitName::Test => splits.test.push(id),
        }
    }
    Ok(splits)
}
