//! Audit procedures built on neighbor retrieval: mislabel detection, the
//! highest-loss baseline, retrieval-frequency influence ranking and
//! sliced accuracy evaluation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::argmax;
use crate::error::{Error, Result};
use crate::index::KnnIndex;
use crate::store::{EmbeddingStore, SliceMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MislabelMode {
    /// Flag the nearest training neighbor of each probe whose model
    /// prediction disagrees with that neighbor's stored label.
    ProbeSet,
    /// Query every training row against the rest of the training set and
    /// flag it when its model prediction disagrees with its nearest
    /// other row's label.
    SelfQuery,
}

impl FromStr for MislabelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "probe-set" => Ok(Self::ProbeSet),
            "self-query" => Ok(Self::SelfQuery),
            other => Err(format!(
                "unknown mode {other:?} (expected probe-set or self-query)"
            )),
        }
    }
}

impl fmt::Display for MislabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ProbeSet => "probe-set",
            Self::SelfQuery => "self-query",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl DetectionScores {
    /// Scores `candidates` against a ground-truth mask. Empty denominators give 0.
    pub fn against(candidates: &BTreeSet<usize>, truth: &[bool]) -> Self {
        let tp = candidates.iter().filter(|&&i| truth[i]).count() as f64;
        let positives = truth.iter().filter(|&&t| t).count() as f64;
        let precision = if candidates.is_empty() {
            0.0
        } else {
            tp / candidates.len() as f64
        };
        let recall = if positives == 0.0 {
            0.0
        } else {
            tp / positives
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MislabelReport {
    pub mode: MislabelMode,
    pub candidates: BTreeSet<usize>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub scores: Option<DetectionScores>,
}

pub fn detect_mislabeled(
    index: &KnnIndex,
    probe: &EmbeddingStore,
    mode: MislabelMode,
    noise_mask: Option<&[bool]>,
) -> Result<MislabelReport> {
    let probs = probe.model_probs().ok_or(Error::MissingModelProbs)?;
    if probe.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: probe.dim(),
        });
    }
    if let Some(mask) = noise_mask {
        if mask.len() != index.len() {
            return Err(Error::LengthMismatch {
                left: mask.len(),
                right: index.len(),
            });
        }
    }
    let width = probe.num_labels() as usize;
    let model_pred: Vec<u32> = probs.chunks_exact(width).map(argmax).collect();
    let train_labels = index.labels();

    let mut candidates = BTreeSet::new();
    match mode {
        MislabelMode::ProbeSet => {
            let nearest = index.batch_query(probe.vectors(), 1, false)?;
            for (pred, nl) in model_pred.iter().zip(&nearest) {
                let j = nl.entries[0].index;
                if *pred != train_labels[j] {
                    candidates.insert(j);
                }
            }
        }
        MislabelMode::SelfQuery => {
            if !is_indexed_store(index, probe)? {
                return Err(Error::ModeStoreMismatch);
            }
            let nearest = index.batch_query(probe.vectors(), 1, true)?;
            for (i, (pred, nl)) in model_pred.iter().zip(&nearest).enumerate() {
                if *pred != train_labels[nl.entries[0].index] {
                    candidates.insert(i);
                }
            }
        }
    }
    let scores = noise_mask.map(|mask| DetectionScores::against(&candidates, mask));
    Ok(MislabelReport {
        mode,
        candidates,
        scores,
    })
}

/// Whether `store` holds exactly the rows and labels `index` was built from.
pub fn is_indexed_store(index: &KnnIndex, store: &EmbeddingStore) -> Result<bool> {
    if store.len() != index.len() || store.labels() != index.labels() {
        return Ok(false);
    }
    for (i, row) in store.rows().enumerate() {
        if index.normalize_query(row)? != index.normalized_row(i) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Replaces the labels of `round(fraction * n)` seeded-uniform rows with a
/// uniformly chosen different label.
pub fn inject_label_noise(
    store: &EmbeddingStore,
    fraction: f64,
    seed: u64,
) -> Result<(EmbeddingStore, Vec<bool>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let n = store.len();
    let flips = (fraction * n as f64).round() as usize;
    let num_labels = store.num_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, flips).into_vec();
    picked.sort_unstable();

    let mut labels = store.labels().to_vec();
    let mut mask = vec![false; n];
    for i in picked {
        let offset = rng.random_range(1..num_labels);
        labels[i] = (labels[i] + offset) % num_labels;
        mask[i] = true;
    }
    Ok((store.with_labels(labels)?, mask))
}

/// `1 - p_model(stored label)` for every row.
pub fn stored_label_losses(store: &EmbeddingStore) -> Result<Vec<f64>> {
    if !store.has_model_probs() {
        return Err(Error::MissingModelProbs);
    }
    Ok(store
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| 1.0 - store.prob_row(i).unwrap()[l as usize] as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub selected: usize,
    pub recall: f64,
}

/// Recall of the "highest loss is mislabeled" baseline at each fraction.
///
/// For fraction `f` the `ceil(f * n)` largest losses are selected, ties by
/// ascending index. With no flipped rows, recall is 0.
pub fn loss_baseline_curve(
    losses: &[f64],
    noise_mask: &[bool],
    fractions: &[f64],
) -> Result<Vec<CurvePoint>> {
    if losses.len() != noise_mask.len() {
        return Err(Error::LengthMismatch {
            left: losses.len(),
            right: noise_mask.len(),
        });
    }
    if let Some(&f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::FractionOutOfRange(f));
    }
    let n = losses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));

    // hits[c] = flipped rows among the c highest-loss rows
    let mut hits = Vec::with_capacity(n + 1);
    hits.push(0usize);
    for &i in &order {
        hits.push(hits.last().unwrap() + usize::from(noise_mask[i]));
    }
    let positives = hits[n];
    Ok(fractions
        .iter()
        .map(|&fraction| {
            let selected = ((fraction * n as f64).ceil() as usize).min(n);
            let recall = if positives == 0 {
                0.0
            } else {
                hits[selected] as f64 / positives as f64
            };
            CurvePoint {
                fraction,
                selected,
                recall,
            }
        })
        .collect())
}

/// Smallest selected fraction at which the loss baseline reaches `recall`,
/// or `None` if it never does.
pub fn fraction_to_reach(losses: &[f64], noise_mask: &[bool], recall: f64) -> Result<Option<f64>> {
    let n = losses.len();
    if n == 0 {
        return Ok(None);
    }
    let fractions: Vec<f64> = (1..=n).map(|c| c as f64 / n as f64).collect();
    let curve = loss_baseline_curve(losses, noise_mask, &fractions)?;
    Ok(curve
        .iter()
        .find(|p| p.recall >= recall)
        .map(|p| p.fraction))
}

pub const DEFAULT_REMOVAL_PERCENTS: [f64; 2] = [10.0, 30.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalList {
    pub percent: f64,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub k: usize,
    pub probe_count: usize,
    pub exclude_self: bool,
    pub frequency: Vec<u64>,
    pub ranking: Vec<usize>,
    pub removal_lists: Vec<RemovalList>,
}

/// Counts how often each training row appears among the `k` nearest
/// neighbors of the probe rows and ranks rows by that count.
///
/// With `exclude_self`, `probe` must be the training store and row `i`
/// never retrieves itself.
pub fn influence_ranking(
    index: &KnnIndex,
    probe: &EmbeddingStore,
    k: usize,
    exclude_self: bool,
    percents: &[f64],
) -> Result<InfluenceReport> {
    if probe.dim() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: probe.dim(),
        });
    }
    if let Some(&p) = percents.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::InvalidConfig(format!(
            "removal percent {p} outside [0, 100]"
        )));
    }
    if exclude_self && !is_indexed_store(index, probe)? {
        return Err(Error::ModeStoreMismatch);
    }
    let lists = index.batch_query(probe.vectors(), k, exclude_self)?;
    let n = index.len();
    let mut frequency = vec![0u64; n];
    for nl in &lists {
        for i in nl.indices() {
            frequency[i] += 1;
        }
    }
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.sort_by(|&a, &b| frequency[b].cmp(&frequency[a]).then(a.cmp(&b)));
    let removal_lists = percents
        .iter()
        .map(|&percent| {
            let count = ((percent * n as f64 / 100.0).ceil() as usize).min(n);
            RemovalList {
                percent,
                indices: ranking[..count].to_vec(),
            }
        })
        .collect();
    Ok(InfluenceReport {
        k,
        probe_count: lists.len(),
        exclude_self,
        frequency,
        ranking,
        removal_lists,
    })
}

/// Total label map applied to predictions and gold before comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CollapseMap {
    pub targets: Vec<u32>,
}

impl CollapseMap {
    pub fn identity(num_labels: usize) -> Self {
        Self {
            targets: (0..num_labels as u32).collect(),
        }
    }

    /// Parses `"1:1,2:1"`; labels not mentioned map to themselves.
    pub fn parse(spec: &str, num_labels: usize) -> Result<Self> {
        let mut map = Self::identity(num_labels);
        let bad = || Error::InvalidConfig(format!("bad collapse map {spec:?}"));
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (from, to) = pair.split_once(':').ok_or_else(bad)?;
            let from: usize = from.trim().parse().map_err(|_| bad())?;
            let to: u32 = to.trim().parse().map_err(|_| bad())?;
            if from >= num_labels || to as usize >= num_labels {
                return Err(bad());
            }
            map.targets[from] = to;
        }
        Ok(map)
    }

    fn apply(&self, label: u32) -> Result<u32> {
        self.targets
            .get(label as usize)
            .copied()
            .ok_or(Error::PartialCollapseMap {
                covered: self.targets.len(),
                label,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceAccuracy {
    pub name: String,
    pub count: usize,
    /// Absent for empty slices.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub count: usize,
    pub accuracy: Option<f64>,
    pub slices: Vec<SliceAccuracy>,
}

pub fn evaluate(
    predictions: &[u32],
    gold: &[u32],
    slices: &[(String, SliceMask)],
    collapse: Option<&CollapseMap>,
) -> Result<AccuracyReport> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let correct: Vec<bool> = predictions
        .iter()
        .zip(gold)
        .map(|(&p, &g)| match collapse {
            Some(map) => Ok(map.apply(p)? == map.apply(g)?),
            None => Ok(p == g),
        })
        .collect::<Result<_>>()?;
    let ratio = |hits: usize, count: usize| (count > 0).then(|| hits as f64 / count as f64);

    let slices = slices
        .iter()
        .map(|(name, mask)| {
            if mask.len() != gold.len() {
                return Err(Error::LengthMismatch {
                    left: mask.len(),
                    right: gold.len(),
                });
            }
            let (hits, count) = mask
                .member
                .iter()
                .zip(&correct)
                .filter(|(m, _)| **m)
                .fold((0, 0), |(h, c), (_, ok)| (h + usize::from(*ok), c + 1));
            Ok(SliceAccuracy {
                name: name.clone(),
                count,
                accuracy: ratio(hits, count),
            })
        })
        .collect::<Result<_>>()?;
    let hits = correct.iter().filter(|&&c| c).count();
    Ok(AccuracyReport {
        count: gold.len(),
        accuracy: ratio(hits, gold.len()),
        slices,
    })
}
