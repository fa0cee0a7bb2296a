//! Meta-path random walks over the rating graph.
//!
//! A walk fixes one rating level `r` and alternates user and item nodes along
//! edges rated `r`, i.e. `U -r-> I -r-> U -r-> ...`. Walks are launched for every
//! `(node, rating, round)` with a non-empty neighborhood at `r`, each from its
//! own derived RNG stream, and stored in that canonical order.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{InteractionGraph, Node, RATING_LEVELS};
use crate::rng;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("invalid walk config: {0}")]
    Config(String),
    #[error("line {line}: bad walk token `{token}`")]
    Token { line: usize, token: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Nodes per walk, including the start node.
    pub walk_length: usize,
    /// Walks per (start node, rating level) pair.
    pub rounds_per_node: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 64,
            rounds_per_node: 32,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<(), WalkError> {
        if self.walk_length < 2 {
            return Err(WalkError::Config(format!("walk_length {} < 2", self.walk_length)));
        }
        if self.rounds_per_node == 0 {
            return Err(WalkError::Config("rounds_per_node must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkMetadata {
    pub config: Option<WalkConfig>,
    /// Rounds are repeated for every rating level a node has edges at.
    pub rounds_per_rating_level: bool,
    pub walk_count: usize,
    pub token_count: usize,
}

/// Walks as joint node ids (users `0..m`, items `m..m+n`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkCorpus {
    pub user_count: usize,
    pub item_count: usize,
    pub walks: Vec<Vec<u32>>,
    pub metadata: WalkMetadata,
}

impl WalkCorpus {
    pub fn node_count(&self) -> usize {
        self.user_count + self.item_count
    }

    pub fn node(&self, id: u32) -> Node {
        Node::from_global(id as usize, self.user_count)
    }

    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// One walk per line, tokens `u{idx}` / `i{idx}` separated by spaces.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::new();
        for walk in &self.walks {
            line.clear();
            for (k, &id) in walk.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                use std::fmt::Write as _;
                let _ = write!(line, "{}", self.node(id));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Reads the text form back; node counts come from the dataset index since
    /// the text alone cannot tell trailing isolated nodes apart.
    pub fn read_text<R: BufRead>(
        source: R,
        user_count: usize,
        item_count: usize,
    ) -> Result<WalkCorpus, WalkError> {
        let mut walks = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let walk = line
                .split_whitespace()
                .map(|tok| {
                    parse_token(tok, user_count, item_count).ok_or_else(|| WalkError::Token {
                        line: i + 1,
                        token: tok.to_string(),
                    })
                })
                .collect::<Result<Vec<u32>, _>>()?;
            walks.push(walk);
        }
        let token_count = walks.iter().map(Vec::len).sum();
        Ok(WalkCorpus {
            user_count,
            item_count,
            metadata: WalkMetadata {
                config: None,
                rounds_per_rating_level: true,
                walk_count: walks.len(),
                token_count,
            },
            walks,
        })
    }
}

fn parse_token(tok: &str, user_count: usize, item_count: usize) -> Option<u32> {
    let (kind, rest) = tok.split_at(1);
    let idx: usize = rest.parse().ok()?;
    match kind {
        "u" if idx < user_count => Some(idx as u32),
        "i" if idx < item_count => Some((user_count + idx) as u32),
        _ => None,
    }
}

fn walk_from(graph: &InteractionGraph, start: Node, slot: usize, length: usize, seed: u64, round: usize) -> Vec<u32> {
    let m = graph.user_count();
    let mut rng = rng::stream(seed, &[start.global(m) as u64, slot as u64, round as u64]);
    let mut walk = Vec::with_capacity(length);
    let mut current = start;
    walk.push(current.global(m) as u32);
    while walk.len() < length {
        let nbrs = graph.neighbors_at_slot(current, slot);
        if nbrs.is_empty() {
            break;
        }
        let next = nbrs[rng.gen_range(0..nbrs.len())];
        current = match current {
            Node::User(_) => Node::Item(next),
            Node::Item(_) => Node::User(next),
        };
        walk.push(current.global(m) as u32);
    }
    walk
}

pub fn sample_walks(graph: &InteractionGraph, config: &WalkConfig) -> Result<WalkCorpus, WalkError> {
    config.validate()?;
    if graph.total_edges() == 0 {
        return Err(WalkError::EmptyGraph);
    }
    let m = graph.user_count();
    let mut launches = Vec::new();
    for id in 0..graph.node_count() {
        let node = Node::from_global(id, m);
        for slot in 0..RATING_LEVELS {
            if !graph.neighbors_at_slot(node, slot).is_empty() {
                launches.push((node, slot));
            }
        }
    }
    let rounds = config.rounds_per_node;
    let walks: Vec<Vec<u32>> = launches
        .par_iter()
        .flat_map_iter(|&(node, slot)| {
            (0..rounds).map(move |round| walk_from(graph, node, slot, config.walk_length, config.seed, round))
        })
        .filter(|w| w.len() >= 2)
        .collect();
    let token_count = walks.iter().map(Vec::len).sum();
    Ok(WalkCorpus {
        user_count: m,
        item_count: graph.item_count(),
        metadata: WalkMetadata {
            config: Some(config.clone()),
            rounds_per_rating_level: true,
            walk_count: walks.len(),
            token_count,
        },
        walks,
    })
}
