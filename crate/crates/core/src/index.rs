//! Exact k-nearest-neighbor search under squared L2 distance.
//!
//! Training rows are normalized once at build time and stored as `f32`.
//! Queries arrive as raw hidden states and are normalized with the index's
//! own statistics, then cast to `f32` exactly like the stored rows. Each
//! distance is accumulated in `f64` by direct subtract-square-add over the
//! dimensions in ascending order; there is no dot-product expansion, so
//! every kernel path produces bit-identical distances.
//!
//! Results are ordered by `(distance, train_index)`, which is a total order,
//! so selection is deterministic regardless of block size or worker count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::NormStats;
use crate::store::{ByteReader, EmbeddingStore, MAX_LABELS};

pub const INDEX_MAGIC: [u8; 4] = *b"KNNI";
pub const INDEX_VERSION: u16 = 1;

/// Rows scanned per tile in the batched kernel.
const ROW_BLOCK: usize = 256;
/// Queries sharing one pass over a row tile.
const QUERY_BLOCK: usize = 8;
/// Single queries over at least this many rows split the scan across workers.
const PAR_SCAN_ROWS: usize = 32_768;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

impl Neighbor {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
    }
}

/// Neighbors sorted by ascending distance, ties by ascending training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeighborList {
    pub entries: Vec<Neighbor>,
}

impl NeighborList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighbor> {
        self.entries.iter()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|n| n.index)
    }
}

/// Bounded max-heap keeping the `k` smallest neighbors seen so far.
struct TopK {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn push(&mut self, candidate: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(candidate);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if candidate < *worst {
                *worst = candidate;
            }
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for n in other.heap {
            self.push(n);
        }
        self
    }

    fn into_list(self) -> NeighborList {
        NeighborList {
            entries: self.heap.into_sorted_vec(),
        }
    }
}

#[inline]
fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let diff = x as f64 - y as f64;
        acc += diff * diff;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    stats: NormStats,
    dim: usize,
    num_labels: u32,
    vectors: Vec<f32>,
    labels: Vec<u32>,
}

impl KnnIndex {
    pub fn build(store: &EmbeddingStore, stats: &NormStats) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::EmptyStore);
        }
        stats.validate()?;
        if stats.dim() != store.dim() {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                actual: stats.dim(),
            });
        }
        let dim = store.dim();
        let mut scratch = vec![0.0f64; dim];
        let mut vectors = Vec::with_capacity(store.vectors().len());
        for (i, row) in store.rows().enumerate() {
            stats.normalize_into(row, &mut scratch);
            let start = vectors.len();
            vectors.extend(scratch.iter().map(|&v| v as f32));
            if vectors[start..].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    what: "normalized vectors",
                    row: i,
                });
            }
        }
        Ok(Self {
            stats: stats.clone(),
            dim,
            num_labels: store.num_labels(),
            vectors,
            labels: store.labels().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_labels(&self) -> u32 {
        self.num_labels
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn normalized_vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn normalized_row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Normalizes a raw hidden state into the index's stored representation.
    pub fn normalize_query(&self, raw: &[f32]) -> Result<Vec<f32>> {
        if raw.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: raw.len(),
            });
        }
        let mut scratch = vec![0.0f64; self.dim];
        self.stats.normalize_into(raw, &mut scratch);
        let out: Vec<f32> = scratch.into_iter().map(|v| v as f32).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "normalized query",
                row: 0,
            });
        }
        Ok(out)
    }

    fn check_k(&self, k: usize, excluding: bool) -> Result<()> {
        if k == 0 {
            return Err(Error::ZeroK);
        }
        let available = self.len() - usize::from(excluding);
        if k > available {
            return Err(Error::KTooLarge { k, available });
        }
        Ok(())
    }

    /// The `k` stored rows closest to the normalized `raw_query`, skipping `exclude`.
    pub fn query(
        &self,
        raw_query: &[f32],
        k: usize,
        exclude: Option<usize>,
    ) -> Result<NeighborList> {
        self.check_k(k, exclude.is_some_and(|e| e < self.len()))?;
        let q = self.normalize_query(raw_query)?;
        Ok(self.search_normalized(&q, k, exclude))
    }

    /// Search with an already-normalized query. Caller guarantees `k` is valid.
    pub(crate) fn search_normalized(
        &self,
        q: &[f32],
        k: usize,
        exclude: Option<usize>,
    ) -> NeighborList {
        let n = self.len();
        let scan = |range: std::ops::Range<usize>| {
            let mut top = TopK::new(k);
            for i in range {
                if Some(i) == exclude {
                    continue;
                }
                top.push(Neighbor {
                    index: i,
                    distance: squared_l2(q, self.normalized_row(i)),
                });
            }
            top
        };
        if n < PAR_SCAN_ROWS {
            return scan(0..n).into_list();
        }
        let blocks = n.div_ceil(PAR_SCAN_ROWS / 4);
        let block_len = n.div_ceil(blocks);
        (0..blocks)
            .into_par_iter()
            .map(|b| scan(b * block_len..((b + 1) * block_len).min(n)))
            .reduce(|| TopK::new(k), TopK::merge)
            .into_list()
    }

    /// `k` nearest neighbors for every row of `queries` (row-major, `m * dim`).
    ///
    /// With `exclude_self_by_row`, `queries` must be the training matrix
    /// (`m == n`) and row `i` never retrieves training index `i`.
    pub fn batch_query(
        &self,
        queries: &[f32],
        k: usize,
        exclude_self_by_row: bool,
    ) -> Result<Vec<NeighborList>> {
        if !queries.len().is_multiple_of(self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: queries.len() % self.dim,
            });
        }
        let m = queries.len() / self.dim;
        if exclude_self_by_row && m != self.len() {
            return Err(Error::LengthMismatch {
                left: m,
                right: self.len(),
            });
        }
        self.check_k(k, exclude_self_by_row)?;

        let normalized: Vec<Vec<f32>> = queries
            .par_chunks(self.dim)
            .map(|raw| self.normalize_query(raw))
            .collect::<Result<_>>()?;

        let n = self.len();
        let lists = normalized
            .par_chunks(QUERY_BLOCK)
            .enumerate()
            .flat_map_iter(|(chunk_no, chunk)| {
                let base = chunk_no * QUERY_BLOCK;
                let mut tops: Vec<TopK> = chunk.iter().map(|_| TopK::new(k)).collect();
                for row_start in (0..n).step_by(ROW_BLOCK) {
                    for i in row_start..(row_start + ROW_BLOCK).min(n) {
                        let row = self.normalized_row(i);
                        for (qi, (q, top)) in chunk.iter().zip(&mut tops).enumerate() {
                            if exclude_self_by_row && base + qi == i {
                                continue;
                            }
                            top.push(Neighbor {
                                index: i,
                                distance: squared_l2(q, row),
                            });
                        }
                    }
                }
                tops.into_iter().map(TopK::into_list)
            })
            .collect();
        Ok(lists)
    }

    /// Writes the snapshot: `"KNNI" | version u16 | n u64 | d u32 | L u32 | eps f64 |
    /// mu d*f64 | sigma d*f64 | vectors n*d f32 | labels n*u32`, little-endian.
    ///
    /// `source_count` is not part of the layout; loading sets it to `n`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(30 + 16 * self.dim + 4 * (n * self.dim + n));
        out.extend_from_slice(&INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.num_labels.to_le_bytes());
        out.extend_from_slice(&self.stats.epsilon.to_le_bytes());
        for v in self.stats.mu.iter().chain(&self.stats.sigma) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const FIXED: usize = 4 + 2 + 8 + 4 + 4 + 8;
        let actual = bytes.len() as u64;
        if bytes.len() >= 4 && bytes[..4] != INDEX_MAGIC {
            return Err(Error::MagicMismatch {
                expected: INDEX_MAGIC,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        if bytes.len() < FIXED {
            return Err(Error::TruncatedFile {
                expected: FIXED as u64,
                actual,
            });
        }
        let mut r = ByteReader::new(&bytes[4..]);
        let version = r.u16();
        if version != INDEX_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let n = r.u64();
        let dim = r.u32() as u64;
        let num_labels = r.u32();
        let epsilon = r.f64();
        if n == 0 {
            return Err(Error::EmptyStore);
        }
        if dim == 0 {
            return Err(Error::InvalidHeader("dimension must be positive".into()));
        }
        if !(2..=MAX_LABELS).contains(&num_labels) {
            return Err(Error::InvalidHeader(format!(
                "num_labels {num_labels} outside [2, {MAX_LABELS}]"
            )));
        }
        let expected = n
            .checked_mul(dim + 1)
            .and_then(|w| w.checked_add(4 * dim))
            .and_then(|w| w.checked_mul(4))
            .and_then(|b| b.checked_add(FIXED as u64))
            .ok_or_else(|| Error::InvalidHeader(format!("row count {n} overflows")))?;
        if actual < expected {
            return Err(Error::TruncatedFile { expected, actual });
        }
        if actual > expected {
            return Err(Error::TrailingBytes(actual - expected));
        }
        let (n, dim) = (n as usize, dim as usize);
        let mu = r.f64s(dim);
        let sigma = r.f64s(dim);
        let vectors = r.f32s(n * dim);
        let labels = r.u32s(n);

        let stats = NormStats {
            mu,
            sigma,
            epsilon,
            source_count: n,
        };
        stats.validate()?;
        if let Some(row) = vectors
            .chunks_exact(dim)
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteValue {
                what: "normalized vectors",
                row,
            });
        }
        if let Some(row) = labels.iter().position(|&l| l >= num_labels) {
            return Err(Error::LabelOutOfRange {
                row,
                label: labels[row],
                num_labels,
            });
        }
        Ok(Self {
            stats,
            dim,
            num_labels,
            vectors,
            labels,
        })
    }
}

pub fn build_index(store: &EmbeddingStore, stats: &NormStats) -> Result<KnnIndex> {
    KnnIndex::build(store, stats)
}

pub fn read_index(path: impl AsRef<Path>) -> Result<KnnIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    KnnIndex::from_bytes(&bytes)
}

pub fn write_index(index: &KnnIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, index.to_bytes()).map_err(|e| Error::io(path, e))
}
