//! Grid search over `(k, T, tau)` on a validation store.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, knn_distribution, BackoffConfig};
use crate::error::{Error, Result};
use crate::index::{KnnIndex, NeighborList};
use crate::store::EmbeddingStore;

pub const DEFAULT_K_CANDIDATES: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];
pub const DEFAULT_TEMPERATURES: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

/// `tau` from 0.00 to 1.00 in steps of 0.01, both endpoints exact.
pub fn default_tau_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Largest `k` allowed by the "fewer than 1% of the training rows" practice.
///
/// `k` must be below `ceil(n / 100)`; `k = 1` is always allowed so small
/// training sets still have a candidate.
pub fn one_percent_limit(n_train: usize) -> usize {
    n_train.div_ceil(100).saturating_sub(1).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub k_candidates: Vec<usize>,
    pub temperatures: Vec<f64>,
    pub taus: Vec<f64>,
}

impl TuneGrid {
    /// Default grids, with `k` filtered by [`one_percent_limit`].
    pub fn defaults_for(n_train: usize) -> Self {
        let limit = one_percent_limit(n_train);
        Self {
            k_candidates: DEFAULT_K_CANDIDATES
                .iter()
                .copied()
                .filter(|&k| k <= limit)
                .collect(),
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            taus: default_tau_grid(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub k: usize,
    pub temperature: f64,
    pub tau: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best: BackoffConfig,
    pub best_accuracy: f64,
    pub baseline_model_acc: f64,
    /// kNN-only accuracy at the best `(k, T)`.
    pub baseline_knn_acc: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub grid_results: Vec<GridCell>,
}

/// Evaluates backoff accuracy over the full `k x T x tau` cross product.
///
/// Neighbors are retrieved once at the largest `k`; smaller `k` use the
/// leading entries of the same lists. The best cell maximizes accuracy, with
/// ties going to smaller `k`, then smaller `T`, then smaller `tau`.
pub fn tune(
    index: &KnnIndex,
    val: &EmbeddingStore,
    grid: &TuneGrid,
    allow_large_k: bool,
) -> Result<TuneReport> {
    if grid.k_candidates.is_empty() {
        return Err(Error::EmptyGrid("k"));
    }
    if grid.temperatures.is_empty() {
        return Err(Error::EmptyGrid("temperature"));
    }
    if grid.taus.is_empty() {
        return Err(Error::EmptyGrid("tau"));
    }
    let probs = val.model_probs().ok_or(Error::MissingModelProbs)?;
    if val.is_empty() {
        return Err(Error::EmptyStore);
    }
    if val.num_labels() != index.num_labels() {
        return Err(Error::LabelSpaceMismatch {
            left: index.num_labels() as usize,
            right: val.num_labels() as usize,
        });
    }
    let n_train = index.len();
    let limit = one_percent_limit(n_train);
    for &k in &grid.k_candidates {
        if k == 0 {
            return Err(Error::ZeroK);
        }
        if k > limit && !allow_large_k {
            return Err(Error::KExceedsOnePercentRule { k, n_train, limit });
        }
    }
    for &t in &grid.temperatures {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::NonPositiveTemperature(t));
        }
    }
    if let Some(&tau) = grid.taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidConfig(format!("tau {tau} outside [0, 1]")));
    }

    let width = val.num_labels() as usize;
    let gold = val.labels();
    let m = val.len();
    let model_rows: Vec<&[f32]> = probs.chunks_exact(width).collect();
    let model_max: Vec<f64> = model_rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|&p| p as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let model_correct: Vec<bool> = model_rows
        .iter()
        .zip(gold)
        .map(|(r, &g)| argmax(r) == g)
        .collect();

    let k_max = *grid.k_candidates.iter().max().unwrap();
    let full = index.batch_query(val.vectors(), k_max, false)?;

    let pairs: Vec<(usize, f64)> = grid
        .k_candidates
        .iter()
        .flat_map(|&k| grid.temperatures.iter().map(move |&t| (k, t)))
        .collect();

    // Per (k, T): correct counts for each tau, plus the kNN-only count.
    let evaluated: Vec<(Vec<usize>, usize)> = pairs
        .par_iter()
        .map(|&(k, t)| {
            let knn_correct = full
                .iter()
                .zip(gold)
                .map(|(nl, &g)| {
                    let prefix = NeighborList {
                        entries: nl.entries[..k].to_vec(),
                    };
                    Ok(knn_distribution(&prefix, index.labels(), t, width)?.argmax() == g)
                })
                .collect::<Result<Vec<bool>>>()?;
            let per_tau = grid
                .taus
                .iter()
                .map(|&tau| {
                    (0..m)
                        .filter(|&i| {
                            if model_max[i] > tau {
                                model_correct[i]
                            } else {
                                knn_correct[i]
                            }
                        })
                        .count()
                })
                .collect();
            Ok((per_tau, knn_correct.iter().filter(|&&c| c).count()))
        })
        .collect::<Result<_>>()?;

    let acc = |count: usize| count as f64 / m as f64;
    let mut grid_results = Vec::with_capacity(pairs.len() * grid.taus.len());
    let mut best: Option<(usize, usize, f64, f64, usize)> = None; // (count, k, T, tau, pair)
    for (p, ((k, t), (per_tau, _))) in pairs.iter().zip(&evaluated).enumerate() {
        for (&tau, &count) in grid.taus.iter().zip(per_tau) {
            grid_results.push(GridCell {
                k: *k,
                temperature: *t,
                tau,
                accuracy: acc(count),
            });
            let better = match best {
                None => true,
                Some((bc, bk, bt, btau, _)) => {
                    count > bc
                        || (count == bc
                            && (*k, *t, tau).partial_cmp(&(bk, bt, btau))
                                == Some(std::cmp::Ordering::Less))
                }
            };
            if better {
                best = Some((count, *k, *t, tau, p));
            }
        }
    }
    let (count, k, temperature, tau, pair) = best.unwrap();

    Ok(TuneReport {
        best: BackoffConfig {
            k,
            temperature,
            tau,
        },
        best_accuracy: acc(count),
        baseline_model_acc: acc(model_correct.iter().filter(|&&c| c).count()),
        baseline_knn_acc: acc(evaluated[pair].1),
        n_train,
        n_val: m,
        grid_results,
    })
}
