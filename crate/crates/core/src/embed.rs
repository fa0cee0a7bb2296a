//! Skip-gram with negative sampling over the walk corpus.
//!
//! For a center node `v` and a context node `c` within the window the loss is
//!
//! ```text
//! -ln σ(out_c · in_v) - Σ_neg ln σ(-out_neg · in_v)
//! ```
//!
//! with negatives drawn from the corpus unigram distribution raised to 3/4.
//! Plain SGD with a constant learning rate; no subsampling, no decay.

use std::io::{Read, Write};

use parking_lot::Mutex;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::scalar::{dot, log_sigmoid, sigmoid, Scalar};
use crate::walker::WalkCorpus;

pub const BINARY_MAGIC: &[u8; 4] = b"MPEB";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("walk corpus is empty")]
    EmptyCorpus,
    #[error("invalid skip-gram config: {0}")]
    Config(String),
    #[error("node id {0} outside the corpus node range")]
    NodeRange(u32),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Single-worker fixed-order updates. When false, walks are processed in
    /// parallel chunks with lock-per-row asynchronous updates.
    pub deterministic: bool,
}

impl Default for SgConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 5,
            negatives: 5,
            learning_rate: 1e-3,
            epochs: 10,
            seed: 0,
            deterministic: true,
        }
    }
}

impl SgConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |msg: &str| Err(EmbedError::Config(msg.to_string()));
        if self.dim < 2 {
            return bad("dim must be >= 2");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Input (`W_U` then `W_I`) and context-side vectors, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T> {
    user_count: usize,
    item_count: usize,
    dim: usize,
    input: Vec<T>,
    output: Vec<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn from_parts(user_count: usize, item_count: usize, dim: usize, input: Vec<T>, output: Vec<T>) -> Result<Self, EmbedError> {
        let rows = user_count + item_count;
        if input.len() != rows * dim || output.len() != rows * dim {
            return Err(EmbedError::Format(format!(
                "expected {} values per matrix, got {} and {}",
                rows * dim,
                input.len(),
                output.len()
            )));
        }
        Ok(Self {
            user_count,
            item_count,
            dim,
            input,
            output,
        })
    }

    /// A table with only input vectors, e.g. loaded from a dump.
    pub fn from_input(user_count: usize, item_count: usize, dim: usize, input: Vec<T>) -> Result<Self, EmbedError> {
        let zeros = vec![T::zero(); input.len()];
        Self::from_parts(user_count, item_count, dim, input, zeros)
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn rows(&self) -> usize {
        self.user_count + self.item_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self) -> &[T] {
        &self.input
    }

    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Input vector of joint node `id` (users first).
    pub fn row(&self, id: usize) -> &[T] {
        &self.input[id * self.dim..(id + 1) * self.dim]
    }

    pub fn output_row(&self, id: usize) -> &[T] {
        &self.output[id * self.dim..(id + 1) * self.dim]
    }

    pub fn user(&self, u: usize) -> &[T] {
        self.row(u)
    }

    pub fn item(&self, i: usize) -> &[T] {
        self.row(self.user_count + i)
    }

    /// `W_U`: the first `m` rows.
    pub fn users(&self) -> &[T] {
        &self.input[..self.user_count * self.dim]
    }

    /// `W_I`: the last `n` rows.
    pub fn items(&self) -> &[T] {
        &self.input[self.user_count * self.dim..]
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    /// Header `m n d`, then one space-separated row per node.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.user_count, self.item_count, self.dim)?;
        for id in 0..self.rows() {
            let row: Vec<String> = self.row(id).iter().map(|x| x.to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_matrix(out, self.user_count as u64, self.item_count as u64, self.dim as u64, &self.input)
    }

    pub fn read_binary<R: Read>(source: R) -> Result<Self, EmbedError> {
        let file = read_matrix(source)?;
        let input = file.data.iter().map(|&x| T::of(x as f64)).collect();
        Self::from_input(file.first as usize, file.second as usize, file.dim as usize, input)
    }
}

/// Contents of an `MPEB` file: three counts and `(first + second) * dim` floats.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFile {
    pub first: u64,
    pub second: u64,
    pub dim: u64,
    pub data: Vec<f32>,
}

/// Little-endian `MPEB` layout: magic, three `u64` counts, then row-major `f32`s.
pub fn write_matrix<W: Write, T: Scalar>(mut out: W, first: u64, second: u64, dim: u64, data: &[T]) -> std::io::Result<()> {
    out.write_all(BINARY_MAGIC)?;
    for c in [first, second, dim] {
        out.write_all(&c.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(data.len() * 4);
    for x in data {
        buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_matrix<R: Read>(mut source: R) -> Result<MatrixFile, EmbedError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 28 || &bytes[..4] != BINARY_MAGIC {
        return Err(EmbedError::Format("missing MPEB header".into()));
    }
    let count = |k: usize| u64::from_le_bytes(bytes[4 + 8 * k..12 + 8 * k].try_into().unwrap());
    let (first, second, dim) = (count(0), count(1), count(2));
    let values = (first + second)
        .checked_mul(dim)
        .ok_or_else(|| EmbedError::Format("size overflow".into()))? as usize;
    let body = &bytes[28..];
    if body.len() != values * 4 {
        return Err(EmbedError::Format(format!(
            "expected {} payload bytes, found {}",
            values * 4,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MatrixFile {
        first,
        second,
        dim,
        data,
    })
}

/// Loss and gradients of one positive pair plus its negatives, evaluated at the
/// given parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SgnsGradient<T> {
    pub loss: T,
    pub center: Vec<T>,
    pub context: Vec<T>,
    pub negatives: Vec<Vec<T>>,
}

pub fn sgns_gradient<T: Scalar>(center_in: &[T], context_out: &[T], negatives_out: &[&[T]]) -> SgnsGradient<T> {
    let d = center_in.len();
    let mut grad_center = vec![T::zero(); d];
    let pos = dot(context_out, center_in);
    let mut loss = -log_sigmoid(pos);
    let g_pos = sigmoid(pos) - T::one();
    for k in 0..d {
        grad_center[k] += g_pos * context_out[k];
    }
    let context = center_in.iter().map(|&x| g_pos * x).collect();
    let mut negatives = Vec::with_capacity(negatives_out.len());
    for neg in negatives_out {
        let s = dot(neg, center_in);
        loss -= log_sigmoid(-s);
        let g = sigmoid(s);
        for k in 0..d {
            grad_center[k] += g * neg[k];
        }
        negatives.push(center_in.iter().map(|&x| g * x).collect());
    }
    SgnsGradient {
        loss,
        center: grad_center,
        context,
        negatives,
    }
}

/// One SGD step on a single (center, context, negatives) instance. Returns the
/// loss at the pre-update parameters.
pub fn sgns_step<T: Scalar>(center_in: &mut [T], context_out: &mut [T], negatives_out: &mut [&mut [T]], learning_rate: T) -> T {
    let grad = {
        let negs: Vec<&[T]> = negatives_out.iter().map(|n| &**n).collect();
        sgns_gradient(center_in, context_out, &negs)
    };
    let apply = |param: &mut [T], g: &[T]| {
        for (p, &g) in param.iter_mut().zip(g) {
            *p -= learning_rate * g;
        }
    };
    apply(center_in, &grad.center);
    apply(context_out, &grad.context);
    for (neg, g) in negatives_out.iter_mut().zip(&grad.negatives) {
        apply(neg, g);
    }
    grad.loss
}

/// Same update as [`sgns_step`] on rows of the flat matrices; `targets[0]` is
/// the positive context, the rest negatives. Repeated negative rows each
/// receive their own pre-update gradient, which sums to the exact gradient.
fn step_rows<T: Scalar>(
    input: &mut [T],
    output: &mut [T],
    dim: usize,
    center: usize,
    targets: &[usize],
    lr: T,
    grad_center: &mut [T],
    coeff: &mut Vec<T>,
) -> T {
    let c = &input[center * dim..(center + 1) * dim];
    coeff.clear();
    grad_center.iter_mut().for_each(|g| *g = T::zero());
    let mut loss = T::zero();
    for (k, &t) in targets.iter().enumerate() {
        let o = &output[t * dim..(t + 1) * dim];
        let s = dot(o, c);
        let (l, g) = if k == 0 {
            (-log_sigmoid(s), sigmoid(s) - T::one())
        } else {
            (-log_sigmoid(-s), sigmoid(s))
        };
        loss += l;
        for j in 0..dim {
            grad_center[j] += g * o[j];
        }
        coeff.push(g);
    }
    let c: Vec<T> = c.to_vec();
    for (&t, &g) in targets.iter().zip(coeff.iter()) {
        let o = &mut output[t * dim..(t + 1) * dim];
        for j in 0..dim {
            o[j] -= lr * g * c[j];
        }
    }
    let ci = &mut input[center * dim..(center + 1) * dim];
    for j in 0..dim {
        ci[j] -= lr * grad_center[j];
    }
    loss
}

struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    fn new(corpus: &WalkCorpus) -> Self {
        let mut counts = vec![0u64; corpus.node_count()];
        for w in &corpus.walks {
            for &id in w {
                counts[id as usize] += 1;
            }
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        Self {
            dist: WeightedIndex::new(weights).expect("corpus has tokens"),
        }
    }

    /// Fills `targets[1..]` with negatives, skipping draws equal to the context.
    /// Gives up after a bounded number of draws so a one-node vocabulary cannot spin.
    fn fill<R: Rng>(&self, rng: &mut R, context: usize, count: usize, targets: &mut Vec<usize>) {
        targets.clear();
        targets.push(context);
        let mut attempts = 0;
        while targets.len() <= count && attempts < 8 * count {
            attempts += 1;
            let n = self.dist.sample(rng);
            if n != context {
                targets.push(n);
            }
        }
    }
}

fn init_table<T: Scalar>(rows: usize, dim: usize, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut rng = rng::stream(seed, &[u64::MAX]);
    let half = 0.5 / dim as f64;
    let input = (0..rows * dim).map(|_| T::of(rng.gen_range(-half..=half))).collect();
    (input, vec![T::zero(); rows * dim])
}

fn context_range(pos: usize, len: usize, window: usize) -> impl Iterator<Item = usize> {
    let lo = pos.saturating_sub(window);
    let hi = (pos + window).min(len - 1);
    (lo..=hi).filter(move |&c| c != pos)
}

/// Result of [`train_skipgram`]: the table and the mean per-pair loss of each epoch.
#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub table: EmbeddingTable<T>,
    pub epoch_loss: Vec<f64>,
}

pub fn train_skipgram<T: Scalar>(corpus: &WalkCorpus, config: &SgConfig) -> Result<Trained<T>, EmbedError> {
    config.validate()?;
    if corpus.walks.iter().all(|w| w.len() < 2) {
        return Err(EmbedError::EmptyCorpus);
    }
    let rows = corpus.node_count();
    if let Some(&bad) = corpus.walks.iter().flatten().find(|&&id| id as usize >= rows) {
        return Err(EmbedError::NodeRange(bad));
    }
    let sampler = NegativeSampler::new(corpus);
    let (input, output) = init_table::<T>(rows, config.dim, config.seed);
    let (input, output, epoch_loss) = if config.deterministic {
        train_sequential(corpus, config, &sampler, input, output)?
    } else {
        train_async(corpus, config, &sampler, input, output)?
    };
    Ok(Trained {
        table: EmbeddingTable::from_parts(corpus.user_count, corpus.item_count, config.dim, input, output)?,
        epoch_loss,
    })
}

fn train_sequential<T: Scalar>(
    corpus: &WalkCorpus,
    config: &SgConfig,
    sampler: &NegativeSampler,
    mut input: Vec<T>,
    mut output: Vec<T>,
) -> Result<(Vec<T>, Vec<T>, Vec<f64>), EmbedError> {
    let dim = config.dim;
    let lr = T::of(config.learning_rate);
    let mut grad = vec![T::zero(); dim];
    let mut coeff = Vec::new();
    let mut targets = Vec::with_capacity(config.negatives + 1);
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = rng::stream(config.seed, &[epoch as u64]);
        let (mut total, mut steps) = (0.0f64, 0usize);
        for walk in &corpus.walks {
            for pos in 0..walk.len() {
                let center = walk[pos] as usize;
                for c in context_range(pos, walk.len(), config.window) {
                    sampler.fill(&mut rng, walk[c] as usize, config.negatives, &mut targets);
                    let loss = step_rows(&mut input, &mut output, dim, center, &targets, lr, &mut grad, &mut coeff);
                    let loss = loss.as_f64();
                    if !loss.is_finite() {
                        return Err(EmbedError::NonFinite { epoch, step: steps });
                    }
                    total += loss;
                    steps += 1;
                }
            }
        }
        epoch_loss.push(total / steps.max(1) as f64);
    }
    Ok((input, output, epoch_loss))
}

const ASYNC_CHUNK: usize = 64;

/// Hogwild-style training: chunks of walks run in parallel and read/write rows
/// under per-row locks without any ordering between chunks.
fn train_async<T: Scalar>(
    corpus: &WalkCorpus,
    config: &SgConfig,
    sampler: &NegativeSampler,
    input: Vec<T>,
    output: Vec<T>,
) -> Result<(Vec<T>, Vec<T>, Vec<f64>), EmbedError> {
    let dim = config.dim;
    let lr = T::of(config.learning_rate);
    let lock_rows = |m: Vec<T>| -> Vec<Mutex<Vec<T>>> { m.chunks(dim).map(|r| Mutex::new(r.to_vec())).collect() };
    let input = lock_rows(input);
    let output = lock_rows(output);
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let per_chunk: Vec<Result<(f64, usize), EmbedError>> = corpus
            .walks
            .par_chunks(ASYNC_CHUNK)
            .enumerate()
            .map(|(chunk, walks)| {
                let mut rng = rng::stream(config.seed, &[epoch as u64, chunk as u64]);
                let mut targets = Vec::with_capacity(config.negatives + 1);
                let (mut total, mut steps) = (0.0f64, 0usize);
                for walk in walks {
                    for pos in 0..walk.len() {
                        let center = walk[pos] as usize;
                        for c in context_range(pos, walk.len(), config.window) {
                            sampler.fill(&mut rng, walk[c] as usize, config.negatives, &mut targets);
                            let c_vec = input[center].lock().clone();
                            let outs: Vec<Vec<T>> = targets.iter().map(|&t| output[t].lock().clone()).collect();
                            let negs: Vec<&[T]> = outs[1..].iter().map(Vec::as_slice).collect();
                            let g = sgns_gradient(&c_vec, &outs[0], &negs);
                            for (k, &t) in targets.iter().enumerate() {
                                let gk = if k == 0 { &g.context } else { &g.negatives[k - 1] };
                                let mut row = output[t].lock();
                                for j in 0..dim {
                                    row[j] -= lr * gk[j];
                                }
                            }
                            {
                                let mut row = input[center].lock();
                                for j in 0..dim {
                                    row[j] -= lr * g.center[j];
                                }
                            }
                            let loss = g.loss.as_f64();
                            if !loss.is_finite() {
                                return Err(EmbedError::NonFinite { epoch, step: steps });
                            }
                            total += loss;
                            steps += 1;
                        }
                    }
                }
                Ok((total, steps))
            })
            .collect();
        let (mut total, mut steps) = (0.0, 0);
        for r in per_chunk {
            let (t, s) = r?;
            total += t;
            steps += s;
        }
        epoch_loss.push(total / steps.max(1) as f64);
    }
    let unlock = |rows: Vec<Mutex<Vec<T>>>| -> Vec<T> { rows.into_iter().flat_map(Mutex::into_inner).collect() };
    Ok((unlock(input), unlock(output), epoch_loss))
}
