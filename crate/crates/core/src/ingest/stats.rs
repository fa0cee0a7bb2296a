use std::fmt;

use serde::{Deserialize, Serialize};

use super::DatasetIndex;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub reviews: usize,
    /// `100 * reviews / (users * items)`
    pub sparsity_percent: f64,
}

impl DatasetStats {
    pub fn from_counts(users: usize, items: usize, reviews: usize) -> Self {
        let cells = users as f64 * items as f64;
        let sparsity_percent = if cells > 0.0 {
            100.0 * reviews as f64 / cells
        } else {
            0.0
        };
        Self {
            users,
            items,
            reviews,
            sparsity_percent,
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users: {}", self.users)?;
        writeln!(f, "items: {}", self.items)?;
        writeln!(f, "reviews: {}", self.reviews)?;
        writeln!(f, "sparsity_percent: {:.4}", self.sparsity_percent)
    }
}

pub fn compute_stats(index: &DatasetIndex) -> DatasetStats {
    DatasetStats::from_counts(index.user_count(), index.item_count(), index.interactions.len())
}
