//! Cosine k-means over the joint user+item table.
//!
//! Lloyd iterations run on unit-normalized copies of the vectors: each point
//! joins the centroid direction with the largest cosine. The stored centroids
//! are plain means of the raw member vectors, and their directions drive the
//! next assignment round. Seeding is k-means++ on cosine distance.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbeddingTable;
use crate::rng;
use crate::scalar::{cosine, dot, normalized, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("need at least {groups} distinct vectors, found {distinct}")]
    TooFewDistinct { groups: usize, distinct: usize },
    #[error("vector {0} is zero; cosine is undefined")]
    ZeroVector(usize),
    #[error("vector {0} has non-finite entries")]
    NonFinite(usize),
    #[error("invalid cluster config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub groups: usize,
    pub max_iters: usize,
    /// Stop once no centroid direction moves farther than this (Euclidean).
    pub tol: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            groups: 100,
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Assignments stopped changing; the assignment is optimal for the stored centroids.
    Stable,
    Tolerance,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel<T> {
    pub dim: usize,
    /// Raw-vector mean of each cluster.
    pub centroids: Vec<Vec<T>>,
    pub assignment: Vec<usize>,
    /// 1-based rank by ascending cosine distance to the own centroid.
    pub fine_rank: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub iterations: usize,
    pub stop: StopReason,
    pub config: ClusterConfig,
}

impl<T: Scalar> ClusterModel<T> {
    pub fn groups(&self) -> usize {
        self.centroids.len()
    }

    pub fn entity_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn max_cluster_size(&self) -> usize {
        self.cluster_sizes.iter().copied().max().unwrap_or(0)
    }

    /// Cosine distance of `point` to centroid `g`; 1 when the centroid is zero.
    pub fn cosine_distance(&self, point: &[T], g: usize) -> T {
        cosine(point, &self.centroids[g]).map_or(T::one(), |c| T::one() - c)
    }

    /// Members of each cluster in ascending entity order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.groups()];
        for (e, &g) in self.assignment.iter().enumerate() {
            out[g].push(e);
        }
        out
    }
}

fn raw_means<T: Scalar>(data: &[T], dim: usize, assignment: &[usize], groups: usize) -> (Vec<Vec<T>>, Vec<usize>) {
    let mut sums = vec![vec![T::zero(); dim]; groups];
    let mut sizes = vec![0usize; groups];
    // fixed entity order keeps the sums reproducible
    for (e, &g) in assignment.iter().enumerate() {
        sizes[g] += 1;
        for (s, &x) in sums[g].iter_mut().zip(&data[e * dim..(e + 1) * dim]) {
            *s += x;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&sizes) {
        if n > 0 {
            let n = T::of(n as f64);
            s.iter_mut().for_each(|x| *x /= n);
        }
    }
    (sums, sizes)
}

fn nearest<T: Scalar>(point: &[T], directions: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (g, d) in directions.iter().enumerate() {
        let c = dot(point, d);
        if c > best.1 {
            best = (g, c);
        }
    }
    best
}

fn seed_directions<T: Scalar>(unit: &[Vec<T>], groups: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = rng::seeded(seed);
    let n = unit.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dist: Vec<f64> = unit
        .iter()
        .map(|x| (1.0 - dot(x, &unit[chosen[0]]).as_f64()).max(0.0))
        .collect();
    while chosen.len() < groups {
        let total: f64 = dist.iter().map(|d| d * d).sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                target -= d * d;
                if target < 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((1.0 - dot(&unit[i], &unit[next]).as_f64()).max(0.0));
        }
    }
    chosen.into_iter().map(|i| unit[i].clone()).collect()
}

/// Gives every empty cluster the point farthest from its own centroid direction,
/// taken from clusters with at least two members.
fn repair_empty<T: Scalar>(unit: &[Vec<T>], directions: &mut [Vec<T>], assignment: &mut [usize]) {
    let groups = directions.len();
    let mut sizes = vec![0usize; groups];
    for &g in assignment.iter() {
        sizes[g] += 1;
    }
    for g in 0..groups {
        if sizes[g] > 0 {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for (e, x) in unit.iter().enumerate() {
            let own = assignment[e];
            if sizes[own] < 2 {
                continue;
            }
            let d = T::one() - dot(x, &directions[own]);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((e, d));
            }
        }
        if let Some((e, _)) = best {
            sizes[assignment[e]] -= 1;
            assignment[e] = g;
            sizes[g] += 1;
            directions[g] = unit[e].clone();
        }
    }
}

pub fn kmeans_cosine<T: Scalar>(embeddings: &EmbeddingTable<T>, config: &ClusterConfig) -> Result<ClusterModel<T>, ClusterError> {
    kmeans_cosine_rows(embeddings.input(), embeddings.dim(), config)
}

/// Clusters the row-major `data` (`dim` columns) and ranks members within
/// their clusters.
pub fn kmeans_cosine_rows<T: Scalar>(data: &[T], dim: usize, config: &ClusterConfig) -> Result<ClusterModel<T>, ClusterError> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(ClusterError::Config(format!("data length {} not a multiple of dim {dim}", data.len())));
    }
    let n = data.len() / dim;
    if config.groups == 0 {
        return Err(ClusterError::Config("groups must be >= 1".into()));
    }
    let mut unit = Vec::with_capacity(n);
    let mut distinct = HashSet::new();
    for (e, row) in data.chunks_exact(dim).enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(ClusterError::NonFinite(e));
        }
        unit.push(normalized(row).ok_or(ClusterError::ZeroVector(e))?);
        distinct.insert(row.iter().map(|x| x.as_f64().to_bits()).collect::<Vec<u64>>());
    }
    if distinct.len() < config.groups {
        return Err(ClusterError::TooFewDistinct {
            groups: config.groups,
            distinct: distinct.len(),
        });
    }

    let groups = config.groups;
    let mut directions = seed_directions(&unit, groups, config.seed);
    let mut assignment = vec![usize::MAX; n];
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let mut next: Vec<usize> = unit.par_iter().map(|x| nearest(x, &directions).0).collect();
        repair_empty(&unit, &mut directions, &mut next);
        let changed = next != assignment;
        assignment = next;
        let (means, _) = raw_means(data, dim, &assignment, groups);
        let mut shift = 0.0f64;
        for (dir, mean) in directions.iter_mut().zip(&means) {
            if let Some(new_dir) = normalized(mean) {
                let moved: f64 = dir
                    .iter()
                    .zip(&new_dir)
                    .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                    .sum::<f64>()
                    .sqrt();
                shift = shift.max(moved);
                *dir = new_dir;
            }
        }
        if !changed {
            stop = StopReason::Stable;
            break;
        }
        if shift < config.tol {
            stop = StopReason::Tolerance;
            break;
        }
    }

    let (centroids, cluster_sizes) = raw_means(data, dim, &assignment, groups);
    let model = ClusterModel {
        dim,
        centroids,
        assignment,
        fine_rank: vec![0; n],
        cluster_sizes,
        iterations,
        stop,
        config: config.clone(),
    };
    Ok(rank_within_cluster_rows(model, data))
}

pub fn rank_within_cluster<T: Scalar>(model: ClusterModel<T>, embeddings: &EmbeddingTable<T>) -> ClusterModel<T> {
    rank_within_cluster_rows(model, embeddings.input())
}

/// Assigns `fine_rank` 1..size per cluster by ascending cosine distance to the
/// centroid, ties to the lower entity index.
pub fn rank_within_cluster_rows<T: Scalar>(mut model: ClusterModel<T>, data: &[T]) -> ClusterModel<T> {
    let dim = model.dim;
    let mut fine_rank = vec![0; model.assignment.len()];
    for (g, members) in model.members().into_iter().enumerate() {
        let mut keyed: Vec<(T, usize)> = members
            .into_iter()
            .map(|e| (model.cosine_distance(&data[e * dim..(e + 1) * dim], g), e))
            .collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
        for (rank, (_, e)) in keyed.into_iter().enumerate() {
            fine_rank[e] = rank + 1;
        }
    }
    model.fine_rank = fine_rank;
    model
}
