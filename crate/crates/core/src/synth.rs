//! Seeded synthetic embedding stores for end-to-end runs without a model.
//!
//! Each class is an isotropic unit-variance Gaussian cluster, see
//! [`SyntheticSpec::cluster_means`] for where the centers go. The simulated
//! base model emits a peaked probability row per example: with probability
//! `1 - model_noise` it peaks on the true label, otherwise on a uniformly
//! chosen wrong label. The peak value is uniform in `[0.5, 1.0]` and the rest
//! of the mass is split among the other labels with flat Dirichlet weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::argmax;
use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, MAX_LABELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub dim: usize,
    pub num_labels: u32,
    /// Distance between cluster means in units of the cluster standard deviation.
    pub cluster_separation: f64,
    /// Probability that the simulated model peaks on a wrong label.
    pub model_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dim must be positive".into()));
        }
        if !(2..=MAX_LABELS).contains(&self.num_labels) {
            return Err(Error::InvalidSpec(format!(
                "num_labels {} outside [2, {MAX_LABELS}]",
                self.num_labels
            )));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::InvalidSpec(
                "cluster_separation must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.model_noise) {
            return Err(Error::InvalidSpec("model_noise must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Cluster means at pairwise distance at least `cluster_separation`.
    ///
    /// With `dim >= num_labels`, dimension `j` belongs to class `j % L` and
    /// each mean is a constant on its own dimensions, so between-class
    /// variance is spread evenly over all dimensions and dataset-wise
    /// normalization rescales the space almost isotropically. Otherwise the
    /// means sit on a line along the first axis.
    pub fn cluster_means(&self) -> Vec<Vec<f64>> {
        let l = self.num_labels as usize;
        let per_class = self.dim / l;
        (0..l)
            .map(|c| {
                let mut mean = vec![0.0; self.dim];
                if per_class >= 1 {
                    let height = self.cluster_separation / (2.0 * per_class as f64).sqrt();
                    for j in (c..self.dim).step_by(l) {
                        mean[j] = height;
                    }
                } else {
                    mean[0] = c as f64 * self.cluster_separation;
                }
                mean
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplits {
    pub train: EmbeddingStore,
    pub val: EmbeddingStore,
    pub test: EmbeddingStore,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticSplits> {
    spec.validate()?;
    let means = spec.cluster_means();
    let split = |n: usize, stream: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        gen_split(spec, &means, n, &mut rng)
    };
    Ok(SyntheticSplits {
        train: split(spec.n_train, 0)?,
        val: split(spec.n_val, 1)?,
        test: split(spec.n_test, 2)?,
    })
}

fn gen_split(
    spec: &SyntheticSpec,
    means: &[Vec<f64>],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EmbeddingStore> {
    let l = spec.num_labels;
    let mut vectors = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n * l as usize);
    for _ in 0..n {
        let label = rng.random_range(0..l);
        for &m in &means[label as usize] {
            let z: f64 = StandardNormal.sample(rng);
            vectors.push((m + z) as f32);
        }
        let peak = if rng.random_bool(spec.model_noise) {
            (label + rng.random_range(1..l)) % l
        } else {
            label
        };
        probs.extend(peaked_row(rng, l as usize, peak as usize));
        labels.push(label);
    }
    EmbeddingStore::new(spec.dim, l, vectors, labels, Some(probs))
}

fn peaked_row(rng: &mut ChaCha8Rng, width: usize, peak: usize) -> Vec<f32> {
    loop {
        let top: f64 = rng.random_range(0.5..=1.0);
        let weights: Vec<f64> = (1..width).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        let mut rest = weights.into_iter();
        let row: Vec<f32> = (0..width)
            .map(|j| {
                if j == peak {
                    top as f32
                } else {
                    ((1.0 - top) * rest.next().unwrap() / total) as f32
                }
            })
            .collect();
        // A near-0.5 peak can tie after the f32 cast; redraw in that case.
        if argmax(&row) as usize == peak && row.iter().filter(|&&p| p == row[peak]).count() == 1 {
            return row;
        }
    }
}
