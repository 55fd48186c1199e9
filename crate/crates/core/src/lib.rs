//! Exact k-nearest-neighbor search over a frozen classifier's cached hidden
//! states, and the tools built on it: confidence-threshold backoff
//! prediction, grid tuning, mislabeled-example detection and
//! retrieval-frequency influence ranking.
//!
//! Typical flow:
//!
//! 1. load a training [`EmbeddingStore`] and estimate [`NormStats`] with
//!    [`compute_stats`];
//! 2. build a [`KnnIndex`];
//! 3. [`tune`] `(k, T, tau)` on a validation store;
//! 4. [`predict_store`] on test data, or run the audits in [`analysis`].

pub mod analysis;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod index;
pub mod normalize;
pub mod store;
pub mod synth;
pub mod tuning;

pub use analysis::{
    detect_mislabeled, evaluate, influence_ranking, inject_label_noise, loss_baseline_curve,
    AccuracyReport, CollapseMap, InfluenceReport, MislabelMode, MislabelReport,
};
pub use classifier::{
    backoff_predict, knn_distribution, predict_store, BackoffConfig, Decision, LabelDistribution,
    Prediction,
};
pub use error::{Error, Result};
pub use index::{build_index, read_index, write_index, KnnIndex, Neighbor, NeighborList};
pub use normalize::{compute_stats, normalize_row, NormStats, DEFAULT_EPSILON};
pub use store::{
    build_slice, read_store, write_store, EmbeddingStore, Sidecar, SliceMask, SliceRule,
};
pub use synth::{gen_synthetic, SyntheticSpec, SyntheticSplits};
pub use tuning::{tune, TuneGrid, TuneReport};
