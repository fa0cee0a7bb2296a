//! Identifier strategies: META (prefix, coarse cluster token, fine rank token)
//! and the numeric RID / SID baselines, plus the OOV vocabulary and its
//! centroid-based initialization matrix.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterModel;
use crate::embed::write_matrix;
use crate::graph::Node;
use crate::ingest::DatasetIndex;
use crate::rng;
use crate::scalar::Scalar;

pub const USER_PREFIX: &str = "<User>";
pub const ITEM_PREFIX: &str = "<Item>";
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum IdError {
    #[error("cluster model covers {model} entities but the index has {index}")]
    SizeMismatch { model: usize, index: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("two entities share the id `{0}`")]
    Duplicate(String),
    #[error("no entity has the id `{0}`")]
    NotFound(String),
    #[error("malformed id artifact: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Meta,
    Rid,
    Sid,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Meta => "meta",
            Strategy::Rid => "rid",
            Strategy::Sid => "sid",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "meta" => Ok(Strategy::Meta),
            "rid" => Ok(Strategy::Rid),
            "sid" => Ok(Strategy::Sid),
            other => Err(format!("unknown id strategy `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Prefix,
    Coarse,
    Fine,
}

impl TokenKind {
    fn as_str(self) -> &'static str {
        match self {
            TokenKind::Prefix => "prefix",
            TokenKind::Coarse => "coarse",
            TokenKind::Fine => "fine",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OovToken {
    pub surface: String,
    pub vocab_index: usize,
    pub kind: TokenKind,
}

pub fn coarse_surface(group: usize) -> String {
    format!("<CT_{}>", group + 1)
}

pub fn fine_surface(rank: usize) -> String {
    format!("<y_{rank}>")
}

/// Entity → token sequence, with the inverse lookup. Sequences are unique per
/// entity type; user and item sequences are told apart by their prefix token.
#[derive(Clone, Debug, PartialEq)]
pub struct IdAssignment {
    strategy: Strategy,
    user_ids: Vec<Vec<String>>,
    item_ids: Vec<Vec<String>>,
    reverse: HashMap<Vec<String>, Node>,
}

impl IdAssignment {
    pub fn new(strategy: Strategy, user_ids: Vec<Vec<String>>, item_ids: Vec<Vec<String>>) -> Result<Self, IdError> {
        let mut reverse = HashMap::with_capacity(user_ids.len() + item_ids.len());
        let entries = user_ids
            .iter()
            .enumerate()
            .map(|(u, s)| (s, Node::User(u as u32)))
            .chain(item_ids.iter().enumerate().map(|(i, s)| (s, Node::Item(i as u32))));
        for (seq, node) in entries {
            if reverse.insert(seq.clone(), node).is_some() {
                return Err(IdError::Duplicate(seq.join(" ")));
            }
        }
        Ok(Self {
            strategy,
            user_ids,
            item_ids,
            reverse,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn user_count(&self) -> usize {
        self.user_ids.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[Vec<String>] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[Vec<String>] {
        &self.item_ids
    }

    pub fn tokens(&self, node: Node) -> Option<&[String]> {
        match node {
            Node::User(u) => self.user_ids.get(u as usize).map(Vec::as_slice),
            Node::Item(i) => self.item_ids.get(i as usize).map(Vec::as_slice),
        }
    }

    /// Token surfaces joined by single spaces.
    pub fn surface(&self, node: Node) -> Option<String> {
        self.tokens(node).map(|t| t.join(" "))
    }

    pub fn lookup(&self, tokens: &[String]) -> Option<Node> {
        self.reverse.get(tokens).copied()
    }

    /// `{"strategy": .., "users": {key: [surfaces]}, "items": {..}}`.
    pub fn to_id_map(&self, index: &DatasetIndex) -> IdMap {
        let side = |names: &[String], ids: &[Vec<String>]| -> BTreeMap<String, Vec<String>> {
            names.iter().cloned().zip(ids.iter().cloned()).collect()
        };
        IdMap {
            strategy: self.strategy,
            users: side(&index.user_names, &self.user_ids),
            items: side(&index.item_names, &self.item_ids),
        }
    }

    pub fn from_id_map(map: &IdMap, index: &DatasetIndex) -> Result<Self, IdError> {
        let side = |names: &[String], ids: &BTreeMap<String, Vec<String>>| -> Result<Vec<Vec<String>>, IdError> {
            names
                .iter()
                .map(|k| ids.get(k).cloned().ok_or_else(|| IdError::Format(format!("id map lacks `{k}`"))))
                .collect()
        };
        Self::new(map.strategy, side(&index.user_names, &map.users)?, side(&index.item_names, &map.items)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    pub strategy: Strategy,
    pub users: BTreeMap<String, Vec<String>>,
    pub items: BTreeMap<String, Vec<String>>,
}

/// Inverse of the assignment.
pub fn decode_id<S: AsRef<str>>(assignment: &IdAssignment, tokens: &[S]) -> Result<Node, IdError> {
    let key: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    assignment.lookup(&key).ok_or_else(|| IdError::NotFound(key.join(" ")))
}

/// OOV tokens plus the initialization matrix (one row per token).
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary<T> {
    pub tokens: Vec<OovToken>,
    pub dim: usize,
    pub f_init: Vec<T>,
    pub alpha: f64,
}

/// Term-by-term token count: prefixes, coarse tokens, fine tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularySize {
    pub prefix: usize,
    pub coarse: usize,
    pub fine: usize,
    pub total: usize,
}

impl<T: Scalar> Vocabulary<T> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn size(&self) -> VocabularySize {
        let count = |k| self.tokens.iter().filter(|t| t.kind == k).count();
        VocabularySize {
            prefix: count(TokenKind::Prefix),
            coarse: count(TokenKind::Coarse),
            fine: count(TokenKind::Fine),
            total: self.tokens.len(),
        }
    }

    pub fn row(&self, token: usize) -> &[T] {
        &self.f_init[token * self.dim..(token + 1) * self.dim]
    }

    /// `surface<TAB>kind<TAB>index` per token.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(out, "{}\t{}\t{}", t.surface, t.kind.as_str(), t.vocab_index)?;
        }
        Ok(())
    }

    /// `f_init` in the `MPEB` layout with counts `(tokens, 0, dim)`.
    pub fn write_f_init<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix(out, self.tokens.len() as u64, 0, self.dim as u64, &self.f_init)
    }
}

pub fn read_vocab_tsv<R: BufRead>(source: R) -> Result<Vec<OovToken>, IdError> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line.map_err(|e| IdError::Format(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || IdError::Format(format!("vocab line {}: `{line}`", n + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        let kind = match fields[1] {
            "prefix" => TokenKind::Prefix,
            "coarse" => TokenKind::Coarse,
            "fine" => TokenKind::Fine,
            _ => return Err(bad()),
        };
        out.push(OovToken {
            surface: fields[0].to_string(),
            kind,
            vocab_index: fields[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Entity in cluster `g` with fine rank `y` gets `(<User>|<Item>, <CT_{g+1}>, <y_y>)`.
/// The vocabulary is the two prefixes, `G` coarse tokens and one fine token per
/// rank up to the largest cluster; `f_init` is left zero until [`build_f_init`].
pub fn assign_meta_ids<T: Scalar>(model: &ClusterModel<T>, index: &DatasetIndex) -> Result<(IdAssignment, Vocabulary<T>), IdError> {
    let m = index.user_count();
    if model.entity_count() != index.entity_count() {
        return Err(IdError::SizeMismatch {
            model: model.entity_count(),
            index: index.entity_count(),
        });
    }
    let id_of = |e: usize, prefix: &str| {
        vec![
            prefix.to_string(),
            coarse_surface(model.assignment[e]),
            fine_surface(model.fine_rank[e]),
        ]
    };
    let user_ids = (0..m).map(|u| id_of(u, USER_PREFIX)).collect();
    let item_ids = (0..index.item_count()).map(|i| id_of(m + i, ITEM_PREFIX)).collect();
    let assignment = IdAssignment::new(Strategy::Meta, user_ids, item_ids)?;

    let mut tokens = Vec::new();
    let mut push = |surface: String, kind| {
        let vocab_index = tokens.len();
        tokens.push(OovToken { surface, vocab_index, kind });
    };
    push(USER_PREFIX.to_string(), TokenKind::Prefix);
    push(ITEM_PREFIX.to_string(), TokenKind::Prefix);
    for g in 0..model.groups() {
        push(coarse_surface(g), TokenKind::Coarse);
    }
    for r in 1..=model.max_cluster_size() {
        push(fine_surface(r), TokenKind::Fine);
    }
    let vocab = Vocabulary {
        f_init: vec![T::zero(); tokens.len() * model.dim],
        tokens,
        dim: model.dim,
        alpha: DEFAULT_ALPHA,
    };
    Ok((assignment, vocab))
}

/// Coarse rows become `alpha * μ_g`; prefix and fine rows are seeded uniform
/// draws in `[-alpha/d, alpha/d]`.
pub fn build_f_init<T: Scalar>(model: &ClusterModel<T>, mut vocab: Vocabulary<T>, alpha: f64, seed: u64) -> Result<Vocabulary<T>, IdError> {
    if vocab.dim != model.dim {
        return Err(IdError::Dimension(format!("vocabulary dim {} vs model dim {}", vocab.dim, model.dim)));
    }
    let coarse = vocab.tokens.iter().filter(|t| t.kind == TokenKind::Coarse).count();
    if coarse != model.groups() {
        return Err(IdError::Dimension(format!("{coarse} coarse tokens vs {} centroids", model.groups())));
    }
    let d = vocab.dim;
    let bound = alpha.abs() / d as f64;
    let mut rng = rng::seeded(seed);
    let a = T::of(alpha);
    let mut f_init = Vec::with_capacity(vocab.tokens.len() * d);
    let mut group = 0;
    for t in &vocab.tokens {
        match t.kind {
            TokenKind::Coarse => {
                f_init.extend(model.centroids[group].iter().map(|&x| a * x));
                group += 1;
            }
            _ => f_init.extend((0..d).map(|_| T::of(rng.gen_range(-bound..=bound)))),
        }
    }
    if f_init.iter().any(|x| !x.is_finite()) {
        return Err(IdError::Dimension("non-finite initialization row".into()));
    }
    vocab.f_init = f_init;
    vocab.alpha = alpha;
    Ok(vocab)
}

/// Decimal digits in pairs from the left, a leading single digit for odd
/// lengths: 2024 → ["20", "24"], 123 → ["1", "23"].
pub fn digit_tokens(value: u64) -> Vec<String> {
    let s = value.to_string();
    let head = s.len() % 2;
    let mut out = Vec::with_capacity(s.len() / 2 + 1);
    if head == 1 {
        out.push(s[..1].to_string());
    }
    let mut k = head;
    while k < s.len() {
        out.push(s[k..k + 2].to_string());
        k += 2;
    }
    out
}

fn numeric_id(prefix: &str, value: u64) -> Vec<String> {
    let mut seq = vec![prefix.to_string()];
    seq.extend(digit_tokens(value));
    seq
}

/// Distinct random integers in `[0, 10·(m+n))`, users first, rendered as
/// `user|item` plus digit-pair tokens.
pub fn assign_rid(index: &DatasetIndex, seed: u64) -> IdAssignment {
    let (m, n) = (index.user_count(), index.item_count());
    let total = m + n;
    let mut rng = rng::seeded(seed);
    let draws = rand::seq::index::sample(&mut rng, 10 * total.max(1), total).into_vec();
    let user_ids = draws[..m].iter().map(|&v| numeric_id("user", v as u64)).collect();
    let item_ids = draws[m..].iter().map(|&v| numeric_id("item", v as u64)).collect();
    IdAssignment::new(Strategy::Rid, user_ids, item_ids).expect("distinct draws")
}

/// Items are numbered from 1 in first-touch order, walking users in index order
/// and each user's history chronologically; users are numbered 1..m.
pub fn assign_sid(index: &DatasetIndex) -> IdAssignment {
    let mut number = vec![0u64; index.item_count()];
    let mut next = 1u64;
    for u in 0..index.user_count() {
        for it in index.sequence(u) {
            let slot = &mut number[it.item as usize];
            if *slot == 0 {
                *slot = next;
                next += 1;
            }
        }
    }
    let user_ids = (1..=index.user_count() as u64).map(|v| numeric_id("user", v)).collect();
    let item_ids = number.iter().map(|&v| numeric_id("item", v)).collect();
    IdAssignment::new(Strategy::Sid, user_ids, item_ids).expect("distinct numbering")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ClusterConfig, StopReason};
    use crate::ingest::{build_index, tiny_records, InteractionRecord};

    fn model(assignment: Vec<usize>, fine_rank: Vec<usize>, groups: usize) -> ClusterModel<f64> {
        let mut sizes = vec![0; groups];
        for &g in &assignment {
            sizes[g] += 1;
        }
        ClusterModel {
            dim: 2,
            centroids: (0..groups).map(|g| vec![g as f64 + 1.0, -1.0]).collect(),
            assignment,
            fine_rank,
            cluster_sizes: sizes,
            iterations: 1,
            stop: StopReason::Stable,
            config: ClusterConfig::default(),
        }
    }

    #[test]
    fn digit_pairs() {
        assert_eq!(digit_tokens(2024), vec!["20", "24"]);
        assert_eq!(digit_tokens(7), vec!["7"]);
        assert_eq!(digit_tokens(123), vec!["1", "23"]);
        assert_eq!(digit_tokens(0), vec!["0"]);
    }

    #[test]
    fn single_entity_meta_id() {
        let idx = build_index(&[InteractionRecord::new("u", "i", 5, 1)]).unwrap();
        let (a, v) = assign_meta_ids(&model(vec![0, 0], vec![1, 2], 1), &idx).unwrap();
        assert_eq!(a.user_ids()[0], vec!["<User>", "<CT_1>", "<y_1>"]);
        assert_eq!(a.item_ids()[0], vec!["<Item>", "<CT_1>", "<y_2>"]);
        assert_eq!(v.size(), VocabularySize { prefix: 2, coarse: 1, fine: 2, total: 5 });
        assert_eq!(decode_id(&a, &["<Item>", "<CT_1>", "<y_2>"]), Ok(Node::Item(0)));
        assert!(matches!(decode_id(&a, &["<Item>", "<CT_9>"]), Err(IdError::NotFound(_))));
    }

    #[test]
    fn size_mismatch() {
        let idx = build_index(&tiny_records()).unwrap();
        assert!(matches!(
            assign_meta_ids(&model(vec![0, 0], vec![1, 2], 1), &idx),
            Err(IdError::SizeMismatch { model: 2, index: 6 })
        ));
    }

    #[test]
    fn f_init_rows() {
        let idx = build_index(&tiny_records()).unwrap();
        let m = model(vec![0, 1, 0, 1, 0, 1], vec![1, 1, 2, 2, 3, 3], 2);
        let (_, v) = assign_meta_ids(&m, &idx).unwrap();
        let v = build_f_init(&m, v, 0.1, 3).unwrap();
        assert_eq!(v.row(2), &[0.1 * 1.0, 0.1 * -1.0]);
        assert_eq!(v.row(3), &[0.1 * 2.0, 0.1 * -1.0]);
        for t in [0, 1, 4, 5, 6] {
            assert!(v.row(t).iter().all(|x| x.abs() <= 0.1 / 2.0));
        }
        let (_, v0) = assign_meta_ids(&m, &idx).unwrap();
        let zero = build_f_init(&m, v0, 0.0, 3).unwrap();
        assert!(zero.f_init.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn f_init_dimension_mismatch() {
        let idx = build_index(&tiny_records()).unwrap();
        let m = model(vec![0, 1, 0, 1, 0, 1], vec![1, 1, 2, 2, 3, 3], 2);
        let (_, mut v) = assign_meta_ids(&m, &idx).unwrap();
        v.dim = 3;
        assert!(matches!(build_f_init(&m, v, 0.1, 0), Err(IdError::Dimension(_))));
    }

    #[test]
    fn sid_first_touch() {
        let recs = vec![
            InteractionRecord::new("u1", "iA", 3, 1),
            InteractionRecord::new("u1", "iB", 3, 2),
            InteractionRecord::new("u2", "iB", 3, 3),
            InteractionRecord::new("u2", "iC", 3, 4),
        ];
        let a = assign_sid(&build_index(&recs).unwrap());
        let ids: Vec<String> = a.item_ids().iter().map(|s| s.join(" ")).collect();
        assert_eq!(ids, vec!["item 1", "item 2", "item 3"]);
        assert_eq!(a.user_ids()[1], vec!["user", "2"]);
    }

    #[test]
    fn rid_is_seeded_and_in_range() {
        let idx = build_index(&tiny_records()).unwrap();
        let a = assign_rid(&idx, 5);
        assert_eq!(a, assign_rid(&idx, 5));
        for seq in a.user_ids().iter().chain(a.item_ids()) {
            let v: u64 = seq[1..].concat().parse().unwrap();
            assert!(v < 60);
        }
    }

    #[test]
    fn vocab_tsv_round_trip() {
        let idx = build_index(&tiny_records()).unwrap();
        let (_, v) = assign_meta_ids(&model(vec![0, 1, 0, 1, 0, 1], vec![1, 1, 2, 2, 3, 3], 2), &idx).unwrap();
        let mut buf = Vec::new();
        v.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("<User>\tprefix\t0\n<Item>\tprefix\t1\n<CT_1>\tcoarse\t2\n"));
        assert_eq!(read_vocab_tsv(buf.as_slice()).unwrap(), v.tokens);
    }

    #[test]
    fn id_map_round_trip() {
        let idx = build_index(&tiny_records()).unwrap();
        let a = assign_sid(&idx);
        let map = a.to_id_map(&idx);
        assert_eq!(map.items["i2"], vec!["item", "2"]);
        assert_eq!(IdAssignment::from_id_map(&map, &idx).unwrap(), a);
    }

    #[test]
    fn duplicate_sequences_are_rejected() {
        let ids = vec![vec!["x".to_string()], vec!["x".to_string()]];
        assert!(matches!(IdAssignment::new(Strategy::Rid, vec![], ids), Err(IdError::Duplicate(_))));
    }
}
