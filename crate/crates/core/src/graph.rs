//! Rating-partitioned bipartite user–item graph.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DatasetIndex;

pub const RATING_LEVELS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("rating {0} outside 1..=5")]
    Rating(u8),
    #[error("{0} out of range")]
    Node(Node),
}

/// A typed node index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    User(u32),
    Item(u32),
}

impl Node {
    /// Joint index with users first: users `0..m`, items `m..m+n`.
    pub fn global(self, user_count: usize) -> usize {
        match self {
            Node::User(u) => u as usize,
            Node::Item(i) => user_count + i as usize,
        }
    }

    pub fn from_global(id: usize, user_count: usize) -> Node {
        if id < user_count {
            Node::User(id as u32)
        } else {
            Node::Item((id - user_count) as u32)
        }
    }

    pub fn is_user(self) -> bool {
        matches!(self, Node::User(_))
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::User(u) => write!(f, "u{u}"),
            Node::Item(i) => write!(f, "i{i}"),
        }
    }
}

/// Adjacency per rating level `r` stored at slot `r - 1`. Lists are sorted by
/// neighbor index and keep duplicate interactions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    user_count: usize,
    item_count: usize,
    user_adj: [Vec<Vec<u32>>; RATING_LEVELS],
    item_adj: [Vec<Vec<u32>>; RATING_LEVELS],
    edge_count: [usize; RATING_LEVELS],
}

fn slot(rating: u8) -> Result<usize, GraphError> {
    if (1..=RATING_LEVELS as u8).contains(&rating) {
        Ok(rating as usize - 1)
    } else {
        Err(GraphError::Rating(rating))
    }
}

pub fn build_graph(index: &DatasetIndex) -> InteractionGraph {
    let (m, n) = (index.user_count(), index.item_count());
    let mut user_adj: [Vec<Vec<u32>>; RATING_LEVELS] = std::array::from_fn(|_| vec![Vec::new(); m]);
    let mut item_adj: [Vec<Vec<u32>>; RATING_LEVELS] = std::array::from_fn(|_| vec![Vec::new(); n]);
    let mut edge_count = [0usize; RATING_LEVELS];
    for it in &index.interactions {
        let r = it.rating as usize - 1;
        user_adj[r][it.user as usize].push(it.item);
        item_adj[r][it.item as usize].push(it.user);
        edge_count[r] += 1;
    }
    for lists in user_adj.iter_mut().chain(item_adj.iter_mut()) {
        for l in lists.iter_mut() {
            l.sort_unstable();
        }
    }
    InteractionGraph {
        user_count: m,
        item_count: n,
        user_adj,
        item_adj,
        edge_count,
    }
}

impl InteractionGraph {
    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn node_count(&self) -> usize {
        self.user_count + self.item_count
    }

    pub fn edge_count(&self, rating: u8) -> Result<usize, GraphError> {
        Ok(self.edge_count[slot(rating)?])
    }

    pub fn total_edges(&self) -> usize {
        self.edge_count.iter().sum()
    }

    /// Sorted neighbors of `node` at `rating`; the opposite node type.
    pub fn rating_neighbors(&self, node: Node, rating: u8) -> Result<&[u32], GraphError> {
        let r = slot(rating)?;
        match node {
            Node::User(u) if (u as usize) < self.user_count => Ok(&self.user_adj[r][u as usize]),
            Node::Item(i) if (i as usize) < self.item_count => Ok(&self.item_adj[r][i as usize]),
            _ => Err(GraphError::Node(node)),
        }
    }

    /// Unchecked neighbor lookup for hot loops over known-valid nodes.
    pub(crate) fn neighbors_at_slot(&self, node: Node, slot: usize) -> &[u32] {
        match node {
            Node::User(u) => &self.user_adj[slot][u as usize],
            Node::Item(i) => &self.item_adj[slot][i as usize],
        }
    }

    pub fn degree(&self, node: Node) -> usize {
        (0..RATING_LEVELS)
            .map(|r| self.neighbors_at_slot(node, r).len())
            .sum()
    }

    /// Per-rating `(user, item)` edge lists for debugging dumps.
    pub fn dump(&self) -> GraphDump {
        let levels = (0..RATING_LEVELS)
            .map(|r| RatingEdges {
                rating: r as u8 + 1,
                edges: self.user_adj[r]
                    .iter()
                    .enumerate()
                    .flat_map(|(u, items)| items.iter().map(move |&i| [u as u32, i]))
                    .collect(),
            })
            .collect();
        GraphDump {
            users: self.user_count,
            items: self.item_count,
            levels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEdges {
    pub rating: u8,
    pub edges: Vec<[u32; 2]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub users: usize,
    pub items: usize,
    pub levels: Vec<RatingEdges>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_index, tiny_records, InteractionRecord};

    fn tiny() -> InteractionGraph {
        build_graph(&build_index(&tiny_records()).unwrap())
    }

    #[test]
    fn tiny_edge_counts() {
        let g = tiny();
        let counts: Vec<usize> = (1..=5).map(|r| g.edge_count(r).unwrap()).collect();
        assert_eq!(counts, vec![2, 1, 0, 1, 2]);
        assert_eq!(g.total_edges(), 6);
    }

    #[test]
    fn tiny_lookups() {
        let g = tiny();
        // i2 is item index 1, u3 is user index 2
        assert_eq!(g.rating_neighbors(Node::Item(1), 5).unwrap(), &[1]);
        assert_eq!(g.rating_neighbors(Node::User(2), 4).unwrap(), &[1]);
        assert!(g.rating_neighbors(Node::User(2), 5).unwrap().is_empty());
    }

    #[test]
    fn lookup_errors() {
        let g = tiny();
        assert_eq!(g.rating_neighbors(Node::User(9), 5), Err(GraphError::Node(Node::User(9))));
        assert_eq!(g.rating_neighbors(Node::User(0), 0), Err(GraphError::Rating(0)));
        assert_eq!(g.rating_neighbors(Node::User(0), 6), Err(GraphError::Rating(6)));
    }

    #[test]
    fn single_interaction() {
        let idx = build_index(&[InteractionRecord::new("u", "i", 3, 1)]).unwrap();
        let g = build_graph(&idx);
        assert_eq!(g.rating_neighbors(Node::User(0), 3).unwrap(), &[0]);
        assert_eq!(g.rating_neighbors(Node::Item(0), 3).unwrap(), &[0]);
        assert_eq!(g.edge_count(1).unwrap(), 0);
    }

    #[test]
    fn dump_lists_every_edge() {
        let d = tiny().dump();
        let total: usize = d.levels.iter().map(|l| l.edges.len()).sum();
        assert_eq!(total, 6);
        assert_eq!(d.levels[4].edges, vec![[0, 0], [1, 1]]);
    }

    #[test]
    fn global_ids_round_trip() {
        for id in 0..7 {
            assert_eq!(Node::from_global(id, 3).global(3), id);
        }
        assert_eq!(Node::Item(0).to_string(), "i0");
    }
}
