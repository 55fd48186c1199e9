//! Straight-line reference implementations used as test oracles. They share
//! no code with the library beyond its data types.
#![allow(dead_code, clippy::needless_range_loop)]

use knn_lens::{EmbeddingStore, NormStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random store with entries in [-3, 3) and optional random probability rows.
pub fn random_store(n: usize, d: usize, l: u32, with_probs: bool, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..n * d).map(|_| rng.random_range(-3.0f32..3.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..l)).collect();
    let probs = with_probs.then(|| {
        (0..n)
            .flat_map(|_| {
                let raw: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(move |v| (v / total) as f32)
            })
            .collect()
    });
    EmbeddingStore::new(d, l, vectors, labels, probs).unwrap()
}

/// Normalized, `f32`-rounded copy of a row.
pub fn oracle_normalize(row: &[f32], stats: &NormStats) -> Vec<f32> {
    let mut out = Vec::with_capacity(row.len());
    for j in 0..row.len() {
        let centered = row[j] as f64 - stats.mu[j];
        let scaled = centered / (stats.sigma[j] + stats.epsilon);
        out.push(scaled as f32);
    }
    out
}

/// Mean and population standard deviation, two-pass in row order.
pub fn oracle_stats(store: &EmbeddingStore, epsilon: f64) -> NormStats {
    let n = store.len();
    let d = store.dim();
    let mut mu = vec![0.0f64; d];
    for i in 0..n {
        for j in 0..d {
            mu[j] += store.row(i)[j] as f64;
        }
    }
    for m in mu.iter_mut() {
        *m /= n as f64;
    }
    let mut sigma = vec![0.0f64; d];
    for i in 0..n {
        for j in 0..d {
            let dev = store.row(i)[j] as f64 - mu[j];
            sigma[j] += dev * dev;
        }
    }
    for s in sigma.iter_mut() {
        *s = (*s / n as f64).sqrt();
    }
    NormStats {
        mu,
        sigma,
        epsilon,
        source_count: n,
    }
}

/// Every distance, stable-sorted by (distance, index), first `k` kept.
pub fn oracle_knn(
    train: &EmbeddingStore,
    stats: &NormStats,
    query: &[f32],
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let rows: Vec<Vec<f32>> = (0..train.len())
        .map(|i| oracle_normalize(train.row(i), stats))
        .collect();
    oracle_knn_normalized(&rows, &oracle_normalize(query, stats), k, exclude)
}

pub fn oracle_knn_normalized(
    rows: &[Vec<f32>],
    q: &[f32],
    k: usize,
    exclude: Option<usize>,
) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = Vec::new();
    for (i, x) in rows.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let mut dist = 0.0f64;
        for j in 0..q.len() {
            let diff = q[j] as f64 - x[j] as f64;
            dist += diff * diff;
        }
        all.push((i, dist));
    }
    // stable: equal distances keep ascending index order
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    all.truncate(k);
    all
}

pub fn first_argmax(values: &[f64]) -> u32 {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best as u32
}

/// Softmax over -d/T relative to the closest neighbor, summed per label.
pub fn oracle_distribution(
    neighbors: &[(usize, f64)],
    labels: &[u32],
    t: f64,
    l: usize,
) -> Vec<f64> {
    let closest = neighbors
        .iter()
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let weight = |d: f64| (-(d - closest) / t).exp();
    let denom: f64 = neighbors.iter().map(|(_, d)| weight(*d)).sum();
    let mut probs = vec![0.0; l];
    for (i, d) in neighbors {
        probs[labels[*i] as usize] += weight(*d) / denom;
    }
    probs
}

/// Per-example scalar path: query, distribution, backoff.
pub fn oracle_predict(
    train: &EmbeddingStore,
    stats: &NormStats,
    eval: &EmbeddingStore,
    k: usize,
    t: f64,
    tau: f64,
) -> Vec<(u32, bool)> {
    let l = eval.num_labels() as usize;
    (0..eval.len())
        .map(|i| {
            let model: Vec<f64> = eval
                .prob_row(i)
                .unwrap()
                .iter()
                .map(|&p| p as f64)
                .collect();
            let max = model.iter().cloned().fold(f64::MIN, f64::max);
            if max > tau {
                (first_argmax(&model), false)
            } else {
                let nn = oracle_knn(train, stats, eval.row(i), k, None);
                (
                    first_argmax(&oracle_distribution(&nn, train.labels(), t, l)),
                    true,
                )
            }
        })
        .collect()
}

pub fn oracle_accuracy(pred: &[u32], gold: &[u32]) -> f64 {
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    hits as f64 / gold.len() as f64
}
