//! Out-of-vocabulary identifier construction for LLM-based recommenders.
//!
//! The pipeline turns rating interactions into three-token identifiers:
//!
//! ```text
//! interactions -> rating graph -> meta-path walks -> skip-gram embeddings
//!              -> cosine k-means -> <Item> <CT_g> <y_r>
//! ```
//!
//! Alongside the identifiers it produces the artifacts an external fine-tuning
//! stack consumes (token vocabulary, centroid initialization matrix, instruction
//! corpora, constrained-decoding trie) and the diversity / memorization scores
//! used to judge identifier quality.
//!
//! Numeric stages are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pin the common choices.

pub mod cluster;
pub mod embed;
pub mod graph;
pub mod idgen;
pub mod ingest;
pub mod metrics;
pub mod promptgen;
pub mod rng;
pub mod scalar;
pub mod walker;

mod error;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision of the CLI pipeline.
pub type Real = f64;

pub type EmbeddingTableF32 = embed::EmbeddingTable<f32>;
pub type EmbeddingTableF64 = embed::EmbeddingTable<f64>;
pub type ClusterModelF32 = cluster::ClusterModel<f32>;
pub type ClusterModelF64 = cluster::ClusterModel<f64>;
pub type VocabularyF32 = idgen::Vocabulary<f32>;
pub type VocabularyF64 = idgen::Vocabulary<f64>;
pub type TokenTableF32 = metrics::TokenTable<f32>;
pub type TokenTableF64 = metrics::TokenTable<f64>;
