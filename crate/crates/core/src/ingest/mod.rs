//! Interaction ingest: parsing, contiguous indexing, task splits, statistics and
//! synthetic fixtures.

mod parse;
mod split;
mod stats;
mod synth;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_interactions, ColumnFormat, InputFormat};
pub use split::{split_leave_one_out, split_random, DatasetSplits, SplitKind, SplitName};
pub use stats::{compute_stats, DatasetStats};
pub use synth::{generate_synthetic, SyntheticConfig};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    Malformed {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: rejected record: {reason}")]
    Rejected { line: usize, reason: String },
    #[error("no interaction records")]
    Empty,
    #[error("no user has at least 3 interactions; leave-one-out split is empty")]
    NoEligibleUsers,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("coverage repair failed; entities absent from train: {0:?}")]
    Uncovered(Vec<String>),
    #[error("invalid synthetic configuration: {0}")]
    Synthetic(String),
    #[error("invalid column format: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One raw rating event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_key: String,
    pub item_key: String,
    pub rating: u8,
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_word: Option<String>,
}

impl InteractionRecord {
    pub fn new(user: impl Into<String>, item: impl Into<String>, rating: u8, timestamp: i64) -> Self {
        Self {
            user_key: user.into(),
            item_key: item.into(),
            rating,
            timestamp,
            review_text: None,
            summary: None,
            explanation: None,
            feature_word: None,
        }
    }

    fn text(&self) -> InteractionText {
        InteractionText {
            review: self.review_text.clone(),
            summary: self.summary.clone(),
            explanation: self.explanation.clone(),
            feature: self.feature_word.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub rating: u8,
    pub timestamp: i64,
}

/// Free-text fields carried alongside an interaction for the text task families.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionText {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
}

/// Contiguous user/item indices over a multiset of interactions.
///
/// Users and items are numbered in first-seen order. `per_user_sequence[u]`
/// holds interaction ids sorted by timestamp, ties in input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub user_names: Vec<String>,
    pub item_names: Vec<String>,
    pub interactions: Vec<Interaction>,
    pub texts: Vec<InteractionText>,
    pub per_user_sequence: Vec<Vec<usize>>,
}

impl DatasetIndex {
    pub fn user_count(&self) -> usize {
        self.user_names.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_names.len()
    }

    pub fn entity_count(&self) -> usize {
        self.user_count() + self.item_count()
    }

    /// Chronological interactions of user `u`.
    pub fn sequence(&self, user: usize) -> impl Iterator<Item = &Interaction> + '_ {
        self.per_user_sequence[user]
            .iter()
            .map(move |&id| &self.interactions[id])
    }

    /// Re-emits the records in index order.
    pub fn to_records(&self) -> Vec<InteractionRecord> {
        self.interactions
            .iter()
            .zip(&self.texts)
            .map(|(it, text)| InteractionRecord {
                user_key: self.user_names[it.user as usize].clone(),
                item_key: self.item_names[it.item as usize].clone(),
                rating: it.rating,
                timestamp: it.timestamp,
                review_text: text.review.clone(),
                summary: text.summary.clone(),
                explanation: text.explanation.clone(),
                feature_word: text.feature.clone(),
            })
            .collect()
    }
}

pub fn build_index(records: &[InteractionRecord]) -> Result<DatasetIndex, IngestError> {
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    let mut user_ids: HashMap<&str, u32> = HashMap::new();
    let mut item_ids: HashMap<&str, u32> = HashMap::new();
    let mut user_names = Vec::new();
    let mut item_names = Vec::new();
    let mut interactions = Vec::with_capacity(records.len());
    let mut texts = Vec::with_capacity(records.len());

    for (line, rec) in records.iter().enumerate() {
        if rec.user_key.is_empty() || rec.item_key.is_empty() {
            return Err(IngestError::Rejected {
                line: line + 1,
                reason: "empty user or item key".into(),
            });
        }
        if !(1..=5).contains(&rec.rating) {
            return Err(IngestError::Rejected {
                line: line + 1,
                reason: format!("rating {} outside 1..=5", rec.rating),
            });
        }
        let user = *user_ids.entry(rec.user_key.as_str()).or_insert_with(|| {
            user_names.push(rec.user_key.clone());
            (user_names.len() - 1) as u32
        });
        let item = *item_ids.entry(rec.item_key.as_str()).or_insert_with(|| {
            item_names.push(rec.item_key.clone());
            (item_names.len() - 1) as u32
        });
        interactions.push(Interaction {
            user,
            item,
            rating: rec.rating,
            timestamp: rec.timestamp,
        });
        texts.push(rec.text());
    }

    let mut per_user_sequence = vec![Vec::new(); user_names.len()];
    for (id, it) in interactions.iter().enumerate() {
        per_user_sequence[it.user as usize].push(id);
    }
    for seq in &mut per_user_sequence {
        // stable: equal timestamps keep input order
        seq.sort_by_key(|&id| interactions[id].timestamp);
    }

    Ok(DatasetIndex {
        user_names,
        item_names,
        interactions,
        texts,
        per_user_sequence,
    })
}

/// The hand-checkable three-user fixture shared by the unit tests.
pub fn tiny_records() -> Vec<InteractionRecord> {
    [
        ("u1", "i1", 5),
        ("u1", "i2", 1),
        ("u2", "i1", 1),
        ("u2", "i2", 5),
        ("u3", "i2", 4),
        ("u3", "i3", 2),
    ]
    .iter()
    .enumerate()
    .map(|(t, &(u, i, r))| InteractionRecord::new(u, i, r, t as i64 + 1))
    .collect()
}
