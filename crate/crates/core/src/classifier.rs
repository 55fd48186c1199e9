//! kNN label distributions and the confidence-threshold backoff rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{KnnIndex, NeighborList};
use crate::store::EmbeddingStore;

/// Hyperparameters of the combined classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffConfig {
    pub k: usize,
    pub temperature: f64,
    pub tau: f64,
}

impl BackoffConfig {
    pub fn new(k: usize, temperature: f64, tau: f64) -> Result<Self> {
        let cfg = Self {
            k,
            temperature,
            tau,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroK);
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::NonPositiveTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!(
                "tau {} outside [0, 1]",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelDistribution {
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn num_labels(&self) -> usize {
        self.probs.len()
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest probability; ties go to the lowest label.
    pub fn argmax(&self) -> u32 {
        argmax(&self.probs)
    }

    pub fn from_f32(row: &[f32]) -> Self {
        Self {
            probs: row.iter().map(|&p| p as f64).collect(),
        }
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(values: &[T]) -> u32 {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best as u32
}

/// Per-neighbor softmax weights over negative squared distances, max-shifted.
pub fn neighbor_weights(neighbors: &NeighborList, temperature: f64) -> Result<Vec<f64>> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborList);
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let logits: Vec<f64> = neighbors
        .iter()
        .map(|n| -n.distance / temperature)
        .collect();
    let shift = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Temperature-weighted label distribution of a neighbor list.
///
/// `labels` is indexed by training index.
pub fn knn_distribution(
    neighbors: &NeighborList,
    labels: &[u32],
    temperature: f64,
    num_labels: usize,
) -> Result<LabelDistribution> {
    let weights = neighbor_weights(neighbors, temperature)?;
    let mut probs = vec![0.0; num_labels];
    for (n, w) in neighbors.iter().zip(weights) {
        let label = labels[n.index];
        if label as usize >= num_labels {
            return Err(Error::LabelOutOfRange {
                row: n.index,
                label,
                num_labels: num_labels as u32,
            });
        }
        probs[label as usize] += w;
    }
    Ok(LabelDistribution { probs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub label: u32,
    pub used_knn: bool,
}

/// Model argmax when `max p_model > tau`, otherwise kNN argmax.
pub fn backoff_predict(
    p_model: &LabelDistribution,
    p_knn: &LabelDistribution,
    tau: f64,
) -> Result<Decision> {
    if p_model.num_labels() != p_knn.num_labels() {
        return Err(Error::LabelSpaceMismatch {
            left: p_model.num_labels(),
            right: p_knn.num_labels(),
        });
    }
    Ok(if p_model.max() > tau {
        Decision {
            label: p_model.argmax(),
            used_knn: false,
        }
    } else {
        Decision {
            label: p_knn.argmax(),
            used_knn: true,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: u32,
    pub used_knn: bool,
    pub p_knn: Vec<f64>,
    pub model_argmax: u32,
}

/// Runs query, kNN distribution and backoff for every example of `eval`.
pub fn predict_store(
    index: &KnnIndex,
    eval: &EmbeddingStore,
    config: &BackoffConfig,
) -> Result<Vec<Prediction>> {
    config.validate()?;
    if !eval.has_model_probs() {
        return Err(Error::MissingModelProbs);
    }
    if eval.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: eval.dim(),
        });
    }
    if eval.num_labels() != index.num_labels() {
        return Err(Error::LabelSpaceMismatch {
            left: index.num_labels() as usize,
            right: eval.num_labels() as usize,
        });
    }
    let num_labels = index.num_labels() as usize;
    let neighbors = index.batch_query(eval.vectors(), config.k, false)?;
    neighbors
        .par_iter()
        .enumerate()
        .map(|(i, nl)| {
            let p_knn = knn_distribution(nl, index.labels(), config.temperature, num_labels)?;
            let p_model = LabelDistribution::from_f32(eval.prob_row(i).unwrap());
            let decision = backoff_predict(&p_model, &p_knn, config.tau)?;
            Ok(Prediction {
                index: i,
                label: decision.label,
                used_knn: decision.used_knn,
                p_knn: p_knn.probs,
                model_argmax: p_model.argmax(),
            })
        })
        .collect()
}

/// Fraction of positions where `predicted == gold`; 0 for empty input.
pub fn accuracy(predicted: impl IntoIterator<Item = u32>, gold: &[u32]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    let correct = predicted
        .into_iter()
        .zip(gold)
        .filter(|(p, g)| p == *g)
        .count();
    correct as f64 / gold.len() as f64
}
