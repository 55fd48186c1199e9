//! Dataset-wise batch normalization of hidden states.
//!
//! Statistics are estimated once over the training store (optionally over a
//! seeded row subset) and then applied verbatim to every training and query
//! vector: `(h - mu) / (sigma + epsilon)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: Vec<f64>,
    /// Population standard deviation per dimension.
    pub sigma: Vec<f64>,
    pub epsilon: f64,
    pub source_count: usize,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.len() != self.mu.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu.len(),
                actual: self.sigma.len(),
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidStats(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidStats("non-finite mean".into()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidStats(
                "sigma must be finite and non-negative".into(),
            ));
        }
        if self.source_count == 0 {
            return Err(Error::InvalidStats(
                "source_count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Normalizes one row into `out`; both must have length `dim()`.
    pub(crate) fn normalize_into(&self, row: &[f32], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] as f64 - self.mu[j]) / (self.sigma[j] + self.epsilon);
        }
    }
}

/// Per-dimension mean and population standard deviation of the store's rows.
///
/// With `subset_size`, rows are a seeded uniform sample without replacement,
/// visited in ascending row order. Accumulation is two-pass in `f64`.
pub fn compute_stats(
    store: &EmbeddingStore,
    subset_size: Option<usize>,
    seed: u64,
    epsilon: f64,
) -> Result<NormStats> {
    let n = store.len();
    if n == 0 {
        return Err(Error::EmptyStore);
    }
    let rows: Vec<usize> = match subset_size {
        None => (0..n).collect(),
        Some(m) if m == 0 || m > n => return Err(Error::SubsetOutOfRange { subset: m, n }),
        Some(m) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
            picked.sort_unstable();
            picked
        }
    };

    let d = store.dim();
    let count = rows.len() as f64;
    let mut mu = vec![0.0f64; d];
    for &i in &rows {
        for (m, &v) in mu.iter_mut().zip(store.row(i)) {
            *m += v as f64;
        }
    }
    for m in &mut mu {
        *m /= count;
    }
    let mut var = vec![0.0f64; d];
    for &i in &rows {
        for ((s, &v), m) in var.iter_mut().zip(store.row(i)).zip(&mu) {
            let dev = v as f64 - m;
            *s += dev * dev;
        }
    }
    let sigma = var.into_iter().map(|s| (s / count).sqrt()).collect();

    let stats = NormStats {
        mu,
        sigma,
        epsilon,
        source_count: rows.len(),
    };
    stats.validate()?;
    Ok(stats)
}

pub fn normalize_row(row: &[f32], stats: &NormStats) -> Result<Vec<f64>> {
    if row.len() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            actual: row.len(),
        });
    }
    let mut out = vec![0.0; row.len()];
    stats.normalize_into(row, &mut out);
    Ok(out)
}
