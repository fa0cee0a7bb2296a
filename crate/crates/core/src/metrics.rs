//! Identifier quality metrics.
//!
//! * ID representation: mean of the token vectors of an identifier.
//! * Diversity Score (DS): mean symmetric KL divergence between softmax
//!   distributions of sampled representation pairs, `(1/2N) Σ [KL(p‖q) + KL(q‖p)]`.
//! * Memorization Score (MS): mean squared gap between representation cosine
//!   and the adjusted cosine similarity of the items' ratings.
//!
//! Adjusted cosine comes in two forms: the exact one over common raters, and
//! the fast one built from per-item deviation sums `Dev` and squared sums `DevS`.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Node;
use crate::idgen::{IdAssignment, Vocabulary};
use crate::ingest::DatasetIndex;
use crate::rng;
use crate::scalar::{cosine, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("token `{0}` has no vector")]
    MissingToken(String),
    #[error("{0} has no identifier")]
    UnknownEntity(Node),
    #[error("similarity of items {0} and {1} is undefined")]
    Undefined(usize, usize),
    #[error("need at least 2 representations, got {0}")]
    TooFew(usize),
    #[error("every sampled pair had undefined similarity")]
    AllUndefined,
    #[error("invalid metric config: {0}")]
    Config(String),
    #[error("token table rows do not match dimension {0}")]
    Dimension(usize),
}

/// Token surface → vector lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenTable<T> {
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> TokenTable<T> {
    pub fn from_rows(surfaces: Vec<String>, dim: usize, data: Vec<T>) -> Result<Self, MetricError> {
        if data.len() != surfaces.len() * dim {
            return Err(MetricError::Dimension(dim));
        }
        let index = surfaces.into_iter().enumerate().map(|(k, s)| (s, k)).collect();
        Ok(Self { index, dim, data })
    }

    /// Rows of the vocabulary's initialization matrix.
    pub fn from_vocabulary(vocab: &Vocabulary<T>) -> Self {
        let surfaces = vocab.tokens.iter().map(|t| t.surface.clone()).collect();
        Self::from_rows(surfaces, vocab.dim, vocab.f_init.clone()).expect("vocabulary rows match")
    }

    /// Independent standard-normal vectors for every distinct token of the
    /// assignment, in first-seen order (users, then items).
    pub fn random_for(assignment: &IdAssignment, dim: usize, seed: u64) -> Self {
        let mut surfaces: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for seq in assignment.user_ids().iter().chain(assignment.item_ids()) {
            for t in seq {
                if seen.insert(t.clone()) {
                    surfaces.push(t.clone());
                }
            }
        }
        let mut rng = rng::seeded(seed);
        let data = (0..surfaces.len() * dim).map(|_| T::of(rng.sample(StandardNormal))).collect();
        Self::from_rows(surfaces, dim, data).expect("sized above")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, surface: &str) -> Option<&[T]> {
        self.index.get(surface).map(|&k| &self.data[k * self.dim..(k + 1) * self.dim])
    }
}

/// Mean of the vectors of the entity's identifier tokens.
pub fn id_representation<T: Scalar>(assignment: &IdAssignment, table: &TokenTable<T>, entity: Node) -> Result<Vec<T>, MetricError> {
    let tokens = assignment.tokens(entity).ok_or(MetricError::UnknownEntity(entity))?;
    let mut acc = vec![T::zero(); table.dim()];
    for t in tokens {
        let v = table.get(t).ok_or_else(|| MetricError::MissingToken(t.clone()))?;
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let k = T::of(tokens.len() as f64);
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// Representations of all items, in item index order.
pub fn item_representations<T: Scalar>(assignment: &IdAssignment, table: &TokenTable<T>) -> Result<Vec<Vec<T>>, MetricError> {
    (0..assignment.item_count())
        .map(|i| id_representation(assignment, table, Node::Item(i as u32)))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    #[default]
    Fast,
    Exact,
}

/// Precomputed rating statistics for item–item adjusted cosine.
///
/// Repeated ratings of one item by one user are averaged into a single
/// `R_{u,i}`; user means `R̄_u` run over every interaction.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityOracle {
    pub user_mean: Vec<f64>,
    /// `Dev(i) = Σ_{u∈U_i} (R_{u,i} − R̄_u)`
    pub dev: Vec<f64>,
    /// `DevS(i) = Σ_{u∈U_i} (R_{u,i} − R̄_u)²`
    pub dev_sq: Vec<f64>,
    /// Per item, `(user, R_{u,i})` sorted by user.
    pub raters: Vec<Vec<(u32, f64)>>,
}

pub fn build_similarity_oracle(index: &DatasetIndex) -> SimilarityOracle {
    let (m, n) = (index.user_count(), index.item_count());
    let mut sum = vec![0.0f64; m];
    let mut count = vec![0usize; m];
    for it in &index.interactions {
        sum[it.user as usize] += it.rating as f64;
        count[it.user as usize] += 1;
    }
    let user_mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();

    let mut cells: Vec<Vec<(u32, f64, usize)>> = vec![Vec::new(); n];
    for it in &index.interactions {
        let list = &mut cells[it.item as usize];
        match list.iter_mut().find(|c| c.0 == it.user) {
            Some(c) => {
                c.1 += it.rating as f64;
                c.2 += 1;
            }
            None => list.push((it.user, it.rating as f64, 1)),
        }
    }
    let mut raters = Vec::with_capacity(n);
    let mut dev = Vec::with_capacity(n);
    let mut dev_sq = Vec::with_capacity(n);
    for mut list in cells {
        list.sort_unstable_by_key(|c| c.0);
        let r: Vec<(u32, f64)> = list.iter().map(|&(u, s, c)| (u, s / c as f64)).collect();
        let (mut d, mut ds) = (0.0, 0.0);
        for &(u, rating) in &r {
            let x = rating - user_mean[u as usize];
            d += x;
            ds += x * x;
        }
        dev.push(d);
        dev_sq.push(ds);
        raters.push(r);
    }
    SimilarityOracle {
        user_mean,
        dev,
        dev_sq,
        raters,
    }
}

impl SimilarityOracle {
    pub fn item_count(&self) -> usize {
        self.dev.len()
    }

    pub fn similarity(&self, mode: SimilarityMode, i: usize, j: usize) -> Result<f64, MetricError> {
        match mode {
            SimilarityMode::Fast => adjusted_cosine_fast(self, i, j),
            SimilarityMode::Exact => adjusted_cosine_exact(self, i, j),
        }
    }
}

/// Adjusted cosine over the users who rated both items.
pub fn adjusted_cosine_exact(oracle: &SimilarityOracle, i: usize, j: usize) -> Result<f64, MetricError> {
    let (a, b) = (&oracle.raters[i], &oracle.raters[j]);
    let (mut p, mut q) = (0, 0);
    let (mut num, mut ei, mut ej) = (0.0, 0.0, 0.0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let mean = oracle.user_mean[a[p].0 as usize];
                let (x, y) = (a[p].1 - mean, b[q].1 - mean);
                num += x * y;
                ei += x * x;
                ej += y * y;
                p += 1;
                q += 1;
            }
        }
    }
    let denom = (ei * ej).sqrt();
    if denom > 0.0 {
        Ok((num / denom).clamp(-1.0, 1.0))
    } else {
        Err(MetricError::Undefined(i, j))
    }
}

/// `Dev(i)·Dev(j) / (√DevS(i)·√DevS(j))`.
pub fn adjusted_cosine_fast(oracle: &SimilarityOracle, i: usize, j: usize) -> Result<f64, MetricError> {
    let (si, sj) = (oracle.dev_sq[i], oracle.dev_sq[j]);
    if si > 0.0 && sj > 0.0 {
        Ok(oracle.dev[i] * oracle.dev[j] / (si.sqrt() * sj.sqrt()))
    } else {
        Err(MetricError::Undefined(i, j))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Pairs drawn for DS.
    pub pair_samples: usize,
    /// Items drawn for MS; all pairs among them are scored.
    pub item_samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub softmax_temperature: f64,
    pub similarity: SimilarityMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            pair_samples: 10_000,
            item_samples: 1_000,
            trials: 5,
            seed: 0,
            softmax_temperature: 1.0,
            similarity: SimilarityMode::Fast,
        }
    }
}

fn log_softmax<T: Scalar>(v: &[T], temperature: T) -> Vec<T> {
    let scaled: Vec<T> = v.iter().map(|&x| x / temperature).collect();
    let max = scaled.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + scaled.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
    scaled.into_iter().map(|x| x - lse).collect()
}

/// `KL(p‖q) + KL(q‖p) = Σ (p − q)(ln p − ln q)` from log-probabilities.
fn symmetric_kl<T: Scalar>(lp: &[T], lq: &[T]) -> T {
    lp.iter()
        .zip(lq)
        .map(|(&a, &b)| (a.exp() - b.exp()) * (a - b))
        .sum()
}

/// Pairs scored by DS: every unordered pair when `n` pairs or more are
/// requested than exist, otherwise `n` uniform draws with replacement.
fn ds_pairs(count: usize, requested: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = count * (count - 1) / 2;
    if requested >= total {
        return (0..count).flat_map(|i| (i + 1..count).map(move |j| (i, j))).collect();
    }
    let mut rng = rng::seeded(seed);
    (0..requested)
        .map(|_| {
            let i = rng.gen_range(0..count);
            let mut j = rng.gen_range(0..count - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect()
}

pub fn compute_ds<T: Scalar>(representations: &[Vec<T>], config: &MetricConfig) -> Result<T, MetricError> {
    ds_with_seed(representations, config.pair_samples, config.softmax_temperature, config.seed)
}

fn ds_with_seed<T: Scalar>(reps: &[Vec<T>], pair_samples: usize, temperature: f64, seed: u64) -> Result<T, MetricError> {
    if reps.len() < 2 {
        return Err(MetricError::TooFew(reps.len()));
    }
    if pair_samples == 0 {
        return Err(MetricError::Config("pair_samples must be >= 1".into()));
    }
    if !(temperature > 0.0) {
        return Err(MetricError::Config("softmax temperature must be positive".into()));
    }
    let pairs = ds_pairs(reps.len(), pair_samples, seed);
    let tau = T::of(temperature);
    let mut cache: HashMap<usize, Vec<T>> = HashMap::new();
    let mut total = T::zero();
    for &(i, j) in &pairs {
        for k in [i, j] {
            cache.entry(k).or_insert_with(|| log_softmax(&reps[k], tau));
        }
        total += symmetric_kl(&cache[&i], &cache[&j]);
    }
    Ok(total / T::of(2.0 * pairs.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsOutcome {
    pub ms: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
}

fn ms_items(count: usize, samples: usize, seed: u64) -> Vec<usize> {
    if samples >= count {
        return (0..count).collect();
    }
    let mut picked = rand::seq::index::sample(&mut rng::seeded(seed), count, samples).into_vec();
    picked.sort_unstable();
    picked
}

/// `representations[i]` must belong to item `i` of the oracle.
pub fn compute_ms<T: Scalar>(representations: &[Vec<T>], oracle: &SimilarityOracle, config: &MetricConfig) -> Result<MsOutcome, MetricError> {
    ms_with_seed(representations, oracle, config.item_samples, config.similarity, config.seed)
}

fn ms_with_seed<T: Scalar>(
    reps: &[Vec<T>],
    oracle: &SimilarityOracle,
    item_samples: usize,
    mode: SimilarityMode,
    seed: u64,
) -> Result<MsOutcome, MetricError> {
    if item_samples < 2 {
        return Err(MetricError::Config("item_samples must be >= 2".into()));
    }
    if reps.len() != oracle.item_count() {
        return Err(MetricError::Config(format!(
            "{} representations for {} items",
            reps.len(),
            oracle.item_count()
        )));
    }
    let items = ms_items(reps.len(), item_samples, seed);
    let (mut total, mut used, mut skipped) = (0.0f64, 0usize, 0usize);
    for (a, &i) in items.iter().enumerate() {
        for &j in &items[a + 1..] {
            let (Some(cos), Ok(sim)) = (cosine(&reps[i], &reps[j]), oracle.similarity(mode, i, j)) else {
                skipped += 1;
                continue;
            };
            let gap = cos.as_f64() - sim;
            total += gap * gap;
            used += 1;
        }
    }
    if used == 0 {
        return Err(MetricError::AllUndefined);
    }
    Ok(MsOutcome {
        ms: total / used as f64,
        pairs_used: used,
        pairs_skipped: skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ds: f64,
    pub ms: f64,
    pub ds_trials: Vec<f64>,
    pub ms_trials: Vec<f64>,
    pub ms_pairs_used: usize,
    pub ms_pairs_skipped: usize,
    pub config: MetricConfig,
}

/// DS and MS averaged over `config.trials` independently seeded trials.
pub fn evaluate<T: Scalar>(representations: &[Vec<T>], oracle: &SimilarityOracle, config: &MetricConfig) -> Result<MetricReport, MetricError> {
    if config.trials == 0 {
        return Err(MetricError::Config("trials must be >= 1".into()));
    }
    let mut report = MetricReport {
        ds: 0.0,
        ms: 0.0,
        ds_trials: Vec::new(),
        ms_trials: Vec::new(),
        ms_pairs_used: 0,
        ms_pairs_skipped: 0,
        config: config.clone(),
    };
    for t in 0..config.trials {
        let seed = rng::derive_seed(config.seed, &[t as u64]);
        let ds = ds_with_seed(representations, config.pair_samples, config.softmax_temperature, seed)?;
        let ms = ms_with_seed(representations, oracle, config.item_samples, config.similarity, seed)?;
        report.ds_trials.push(ds.as_f64());
        report.ms_trials.push(ms.ms);
        report.ms_pairs_used += ms.pairs_used;
        report.ms_pairs_skipped += ms.pairs_skipped;
    }
    let k = config.trials as f64;
    report.ds = report.ds_trials.iter().sum::<f64>() / k;
    report.ms = report.ms_trials.iter().sum::<f64>() / k;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub pairs: usize,
    pub mean: f64,
    pub std: f64,
}

/// DS mean and sample standard deviation over `trials` seeds for each pair count.
pub fn ds_convergence<T: Scalar>(
    representations: &[Vec<T>],
    pair_counts: &[usize],
    trials: usize,
    seed: u64,
    temperature: f64,
) -> Result<Vec<ConvergencePoint>, MetricError> {
    if trials < 2 {
        return Err(MetricError::Config("trials must be >= 2".into()));
    }
    pair_counts
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let values = (0..trials)
                .map(|t| {
                    ds_with_seed(representations, n, temperature, rng::derive_seed(seed, &[k as u64, t as u64]))
                        .map(Scalar::as_f64)
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let mean = values.iter().sum::<f64>() / trials as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            Ok(ConvergencePoint {
                pairs: n,
                mean,
                std: var.sqrt(),
            })
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(mut out: W, points: &[ConvergencePoint]) -> std::io::Result<()> {
    writeln!(out, "N,mean,std")?;
    for p in points {
        writeln!(out, "{},{},{}", p.pairs, p.mean, p.std)?;
    }
    Ok(())
}

/// Cosine and ground-truth similarity over a random item sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub items: Vec<usize>,
    pub cosine: Vec<Vec<f64>>,
    /// `None` where the adjusted cosine is undefined.
    pub truth: Vec<Vec<Option<f64>>>,
}

pub fn similarity_heatmap<T: Scalar>(
    representations: &[Vec<T>],
    sample_size: usize,
    oracle: &SimilarityOracle,
    mode: SimilarityMode,
    seed: u64,
) -> Result<Heatmap, MetricError> {
    if sample_size > representations.len() {
        return Err(MetricError::Config(format!(
            "sample size {sample_size} exceeds {} items",
            representations.len()
        )));
    }
    let items = ms_items(representations.len(), sample_size, seed);
    let k = items.len();
    let mut cos = vec![vec![0.0; k]; k];
    let mut truth = vec![vec![None; k]; k];
    for a in 0..k {
        cos[a][a] = 1.0;
        truth[a][a] = oracle.similarity(mode, items[a], items[a]).ok();
        for b in a + 1..k {
            let c = cosine(&representations[items[a]], &representations[items[b]]).map_or(0.0, Scalar::as_f64);
            cos[a][b] = c;
            cos[b][a] = c;
            let t = oracle.similarity(mode, items[a], items[b]).ok();
            truth[a][b] = t;
            truth[b][a] = t;
        }
    }
    Ok(Heatmap {
        items,
        cosine: cos,
        truth,
    })
}

impl Heatmap {
    pub fn write_cosine_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.cosine {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Undefined cells are left empty.
    pub fn write_truth_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.truth {
            let cells: Vec<String> = row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idgen::Strategy;
    use crate::ingest::{build_index, tiny_records, InteractionRecord};

    fn tiny_oracle() -> SimilarityOracle {
        build_similarity_oracle(&build_index(&tiny_records()).unwrap())
    }

    #[test]
    fn tiny_deviation_sums() {
        let o = tiny_oracle();
        assert_eq!(o.user_mean, vec![3.0, 3.0, 3.0]);
        assert_eq!(o.dev, vec![0.0, 1.0, -1.0]);
        assert_eq!(o.dev_sq, vec![8.0, 9.0, 1.0]);
    }

    #[test]
    fn tiny_similarities() {
        let o = tiny_oracle();
        assert_eq!(adjusted_cosine_exact(&o, 0, 1), Ok(-1.0));
        assert_eq!(adjusted_cosine_fast(&o, 0, 1), Ok(0.0));
        assert!((adjusted_cosine_fast(&o, 1, 2).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(adjusted_cosine_exact(&o, 1, 1), Ok(1.0));
        // i1 and i3 share no rater
        assert_eq!(adjusted_cosine_exact(&o, 0, 2), Err(MetricError::Undefined(0, 2)));
    }

    #[test]
    fn zero_deviation_is_undefined() {
        let recs = vec![InteractionRecord::new("u", "a", 4, 1), InteractionRecord::new("u", "b", 4, 2)];
        let o = build_similarity_oracle(&build_index(&recs).unwrap());
        assert_eq!(o.dev, vec![0.0, 0.0]);
        assert_eq!(o.dev_sq, vec![0.0, 0.0]);
        assert!(adjusted_cosine_fast(&o, 0, 1).is_err());
        assert!(adjusted_cosine_exact(&o, 0, 0).is_err());
    }

    #[test]
    fn representation_is_token_mean() {
        let a = IdAssignment::new(Strategy::Rid, vec![], vec![vec!["x".into(), "y".into(), "z".into()]]).unwrap();
        let table = TokenTable::from_rows(
            vec!["x".into(), "y".into(), "z".into()],
            2,
            vec![1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let e = id_representation(&a, &table, Node::Item(0)).unwrap();
        assert!((e[0] - 2.0 / 3.0).abs() < 1e-15 && (e[1] - 2.0 / 3.0).abs() < 1e-15);
        let partial = TokenTable::from_rows(vec!["x".into()], 2, vec![1.0f64, 0.0]).unwrap();
        assert_eq!(
            id_representation(&a, &partial, Node::Item(0)),
            Err(MetricError::MissingToken("y".into()))
        );
    }

    #[test]
    fn ds_closed_form_pair() {
        let ln2 = 2f64.ln();
        let reps = vec![vec![ln2, 0.0], vec![0.0, ln2]];
        let cfg = MetricConfig { pair_samples: 1, ..Default::default() };
        let ds = compute_ds(&reps, &cfg).unwrap();
        assert!((ds - ln2 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ds_identical_and_errors() {
        let reps = vec![vec![0.3f32, -1.0, 2.0]; 5];
        assert_eq!(compute_ds(&reps, &MetricConfig::default()).unwrap(), 0.0);
        let bad = MetricConfig { pair_samples: 0, ..Default::default() };
        assert!(compute_ds(&reps, &bad).is_err());
        assert_eq!(compute_ds(&reps[..1], &MetricConfig::default()), Err(MetricError::TooFew(1)));
    }

    #[test]
    fn ms_single_pair() {
        let o = tiny_oracle();
        // items i2, i3 with parallel representations; item i1 made orthogonal
        let reps = vec![vec![0.0f64, 1.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let cfg = MetricConfig { item_samples: 3, ..Default::default() };
        let out = compute_ms(&reps, &o, &cfg).unwrap();
        // fast sims: (i1,i2)=0, (i1,i3)=0, (i2,i3)=-1/3; cosines 0, 0, 1
        assert_eq!(out.pairs_used, 3);
        assert!((out.ms - (16.0 / 9.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ms_all_undefined() {
        let recs = vec![InteractionRecord::new("u", "a", 4, 1), InteractionRecord::new("u", "b", 4, 2)];
        let o = build_similarity_oracle(&build_index(&recs).unwrap());
        let reps = vec![vec![1.0f64, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            compute_ms(&reps, &o, &MetricConfig { item_samples: 2, ..Default::default() }),
            Err(MetricError::AllUndefined)
        );
    }

    #[test]
    fn convergence_of_identical_is_flat() {
        let reps = vec![vec![1.0f64, 2.0]; 4];
        let pts = ds_convergence(&reps, &[1, 3, 10], 3, 0, 1.0).unwrap();
        assert!(pts.iter().all(|p| p.mean == 0.0 && p.std == 0.0));
        assert!(ds_convergence(&reps, &[1], 1, 0, 1.0).is_err());
    }

    #[test]
    fn heatmap_shapes() {
        let o = tiny_oracle();
        let reps = vec![vec![1.0f64, 0.2], vec![0.3, 1.0], vec![-1.0, 0.5]];
        let h = similarity_heatmap(&reps, 1, &o, SimilarityMode::Exact, 2).unwrap();
        assert_eq!(h.cosine, vec![vec![1.0]]);
        let h = similarity_heatmap(&reps, 3, &o, SimilarityMode::Exact, 2).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(h.cosine[a][b], h.cosine[b][a]);
            }
        }
        assert_eq!(h.truth[0][2], None);
        let mut csv = Vec::new();
        h.write_truth_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().next().unwrap(), "1,-1,");
        assert!(similarity_heatmap(&reps, 4, &o, SimilarityMode::Fast, 0).is_err());
    }
}
