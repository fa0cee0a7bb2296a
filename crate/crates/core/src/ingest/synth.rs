use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, InteractionRecord};
use crate::rng;

/// Block-structured rating data: users love their own block and occasionally
/// pan items elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub blocks: usize,
    pub users_per_block: usize,
    pub items_per_block: usize,
    pub cross_block_noise: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn user_block(&self, user: usize) -> usize {
        user / self.users_per_block
    }

    pub fn item_block(&self, item: usize) -> usize {
        item / self.items_per_block
    }
}

/// Users `u{k}` and items `i{k}`, numbered block by block. Every user rates each
/// item of its own block 5 and, with probability `cross_block_noise`, each
/// foreign item 1. Timestamps count up from 1 in emission order.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<InteractionRecord>, IngestError> {
    if config.blocks == 0 || config.users_per_block == 0 || config.items_per_block == 0 {
        return Err(IngestError::Synthetic("zero blocks, users or items".into()));
    }
    if !(0.0..1.0).contains(&config.cross_block_noise) {
        return Err(IngestError::Synthetic(format!(
            "noise {} outside [0, 1)",
            config.cross_block_noise
        )));
    }
    let users = config.blocks * config.users_per_block;
    let items = config.blocks * config.items_per_block;
    let mut rng = rng::seeded(config.seed);
    let mut out = Vec::new();
    let mut clock = 0i64;
    for u in 0..users {
        let home = config.user_block(u);
        for i in 0..items {
            let rating = if config.item_block(i) == home {
                5
            } else if rng.gen::<f64>() < config.cross_block_noise {
                1
            } else {
                continue;
            };
            clock += 1;
            let mut rec = InteractionRecord::new(format!("u{u}"), format!("i{i}"), rating, clock);
            if rating == 5 {
                rec.review_text = Some(format!("Item i{i} fits block {home} perfectly."));
                rec.summary = Some("Perfect!".into());
                rec.explanation = Some("Absolutely great product!".into());
            } else {
                rec.review_text = Some(format!("Item i{i} is not what block {home} wanted."));
                rec.summary = Some("Not for me.".into());
                rec.explanation = Some("Poor fit for my needs.".into());
            }
            rec.feature_word = Some("quality".into());
            out.push(rec);
        }
    }
    Ok(out)
}
