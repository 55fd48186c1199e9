//! Labeled embedding container and its on-disk format.
//!
//! Layout (little-endian):
//!
//! ```text
//! header, 32 bytes:
//!   magic "KNNC" | version u16 = 1 | flags u16 | n u64 | d u32 | num_labels u32 | 8 zero bytes
//! body:
//!   n*d f32 vectors, row-major
//!   n u32 labels
//!   n*L f32 probabilities, row-major (only when flags bit 0 is set)
//! ```
//!
//! Free-form per-example metadata (texts, split names, heuristics) lives in a
//! JSON-lines sidecar next to the container, see [`Sidecar`].

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const STORE_MAGIC: [u8; 4] = *b"KNNC";
pub const STORE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const FLAG_MODEL_PROBS: u16 = 1;
pub const MAX_LABELS: u32 = 1 << 16;

/// Tolerance on the row sum of stored model probabilities.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;
const PROB_ENTRY_SLACK: f32 = 1e-6;

/// `n` labeled `d`-dimensional vectors with optional base-model probabilities.
///
/// Construction validates every invariant, so a value of this type is always
/// well formed. Stores are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    num_labels: u32,
    vectors: Vec<f32>,
    labels: Vec<u32>,
    model_probs: Option<Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(
        dim: usize,
        num_labels: u32,
        vectors: Vec<f32>,
        labels: Vec<u32>,
        model_probs: Option<Vec<f32>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidHeader("dimension must be positive".into()));
        }
        if !(2..=MAX_LABELS).contains(&num_labels) {
            return Err(Error::InvalidHeader(format!(
                "num_labels {num_labels} outside [2, {MAX_LABELS}]"
            )));
        }
        let n = labels.len();
        if vectors.len() != n * dim {
            return Err(Error::ShapeMismatch {
                expected: n * dim,
                actual: vectors.len(),
            });
        }
        if let Some(row) = vectors
            .chunks_exact(dim)
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteValue {
                what: "vectors",
                row,
            });
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= num_labels {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    num_labels,
                });
            }
        }
        if let Some(probs) = &model_probs {
            let width = num_labels as usize;
            if probs.len() != n * width {
                return Err(Error::ShapeMismatch {
                    expected: n * width,
                    actual: probs.len(),
                });
            }
            for (row, p) in probs.chunks_exact(width).enumerate() {
                check_prob_row(row, p)?;
            }
        }
        Ok(Self {
            dim,
            num_labels,
            vectors,
            labels,
            model_probs,
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

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn model_probs(&self) -> Option<&[f32]> {
        self.model_probs.as_deref()
    }

    pub fn has_model_probs(&self) -> bool {
        self.model_probs.is_some()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn prob_row(&self, i: usize) -> Option<&[f32]> {
        let width = self.num_labels as usize;
        self.model_probs
            .as_ref()
            .map(|p| &p[i * width..(i + 1) * width])
    }

    /// Same vectors and probabilities under a different label assignment.
    pub fn with_labels(&self, labels: Vec<u32>) -> Result<Self> {
        Self::new(
            self.dim,
            self.num_labels,
            self.vectors.clone(),
            labels,
            self.model_probs.clone(),
        )
    }

    /// Serializes to the container format. Output is a pure function of the store.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let body = 4 * (self.vectors.len() + n + self.model_probs.as_ref().map_or(0, Vec::len));
        let mut out = Vec::with_capacity(HEADER_LEN + body);
        out.extend_from_slice(&STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        let flags = if self.model_probs.is_some() {
            FLAG_MODEL_PROBS
        } else {
            0
        };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.num_labels.to_le_bytes());
        out.extend_from_slice(&[0u8; 8]);
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        if let Some(probs) = &self.model_probs {
            for p in probs {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let actual = bytes.len() as u64;
        if bytes.len() >= 4 && bytes[..4] != STORE_MAGIC {
            return Err(Error::MagicMismatch {
                expected: STORE_MAGIC,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile {
                expected: HEADER_LEN as u64,
                actual,
            });
        }
        let mut r = ByteReader::new(&bytes[4..HEADER_LEN]);
        let version = r.u16();
        if version != STORE_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        let flags = r.u16();
        if flags & !FLAG_MODEL_PROBS != 0 {
            return Err(Error::InvalidHeader(format!(
                "unknown flag bits {flags:#06x}"
            )));
        }
        let n = r.u64();
        let dim = r.u32();
        let num_labels = r.u32();
        if r.rest().iter().any(|&b| b != 0) {
            return Err(Error::InvalidHeader("reserved bytes are not zero".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidHeader("dimension must be positive".into()));
        }
        if !(2..=MAX_LABELS).contains(&num_labels) {
            return Err(Error::InvalidHeader(format!(
                "num_labels {num_labels} outside [2, {MAX_LABELS}]"
            )));
        }
        let has_probs = flags & FLAG_MODEL_PROBS != 0;
        let per_row = dim as u64 + 1 + if has_probs { num_labels as u64 } else { 0 };
        let expected = n
            .checked_mul(per_row)
            .and_then(|w| w.checked_mul(4))
            .and_then(|b| b.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::InvalidHeader(format!("row count {n} overflows")))?;
        if actual < expected {
            return Err(Error::TruncatedFile { expected, actual });
        }
        if actual > expected {
            return Err(Error::TrailingBytes(actual - expected));
        }

        let n = n as usize;
        let dim = dim as usize;
        let mut r = ByteReader::new(&bytes[HEADER_LEN..]);
        let vectors = r.f32s(n * dim);
        let labels = r.u32s(n);
        let model_probs = has_probs.then(|| r.f32s(n * num_labels as usize));
        Self::new(dim, num_labels, vectors, labels, model_probs)
    }
}

fn check_prob_row(row: usize, p: &[f32]) -> Result<()> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            what: "model_probs",
            row,
        });
    }
    let sum: f64 = p.iter().map(|&v| v as f64).sum();
    let in_range = p
        .iter()
        .all(|&v| (0.0..=1.0 + PROB_ENTRY_SLACK).contains(&v));
    if !in_range || (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::ProbRowNotNormalized { row, sum });
    }
    Ok(())
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    pub(crate) fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }

    pub(crate) fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    pub(crate) fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    pub(crate) fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }

    pub(crate) fn f32s(&mut self, count: usize) -> Vec<f32> {
        (0..count)
            .map(|_| f32::from_le_bytes(self.take()))
            .collect()
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.f64()).collect()
    }

    pub(crate) fn u32s(&mut self, count: usize) -> Vec<u32> {
        (0..count).map(|_| self.u32()).collect()
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }
}

pub fn read_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

pub fn write_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

/// `dir/train.knnc` -> `dir/train.meta.jsonl`.
pub fn sidecar_path(store_path: impl AsRef<Path>) -> PathBuf {
    let p = store_path.as_ref();
    let stem = p.file_stem().unwrap_or_default().to_string_lossy();
    p.with_file_name(format!("{stem}.meta.jsonl"))
}

/// Key that marks the optional first sidecar line as a header rather than an example.
pub const SIDECAR_HEADER_KEY: &str = "_header";

/// Per-example metadata, one JSON object per line.
///
/// A first line of the form `{"_header": {...}}` carries file-level metadata
/// (for instance the label vocabulary in probability-column order) and is not
/// counted as an example.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub header: Option<Map<String, Value>>,
    pub rows: Vec<Map<String, Value>>,
}

impl Sidecar {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sidecar = Sidecar::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut obj: Map<String, Value> = serde_json::from_str(line)?;
            if sidecar.header.is_none() && sidecar.rows.is_empty() {
                if let Some(Value::Object(h)) = obj.remove(SIDECAR_HEADER_KEY) {
                    sidecar.header = Some(h);
                    continue;
                }
            }
            sidecar.rows.push(obj);
        }
        Ok(sidecar)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.header {
            let mut wrapper = Map::new();
            wrapper.insert(SIDECAR_HEADER_KEY.into(), Value::Object(h.clone()));
            out.push_str(&Value::Object(wrapper).to_string());
            out.push('\n');
        }
        for row in &self.rows {
            out.push_str(&Value::Object(row.clone()).to_string());
            out.push('\n');
        }
        out
    }
}

/// Loads the sidecar next to `store_path`, or `None` if there is none.
pub fn read_sidecar(store_path: impl AsRef<Path>) -> Result<Option<Sidecar>> {
    let path = sidecar_path(store_path);
    match fs::read_to_string(&path) {
        Ok(text) => Sidecar::parse(&text).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Boolean membership over the examples of one store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceMask {
    pub member: Vec<bool>,
}

impl SliceMask {
    pub fn len(&self) -> usize {
        self.member.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member.is_empty()
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
}

/// A predicate selecting a subset of examples.
///
/// Grammar:
///
/// ```text
/// label == 2            label != 0
/// <field> contains 'not'
/// <field> == 'lexical_overlap'      <field> != "x"
/// ```
///
/// Field rules read the sidecar. String fields compare as text; other JSON
/// values compare by their JSON rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SliceRule {
    Label {
        op: CmpOp,
        value: u32,
    },
    FieldContains {
        field: String,
        needle: String,
    },
    FieldCmp {
        field: String,
        op: CmpOp,
        value: String,
    },
}

impl SliceRule {
    pub fn parse(rule: &str) -> Result<Self> {
        let bad = || Error::InvalidRule(rule.to_string());
        let text = rule.trim();
        let (field, rest) = text.split_once(char::is_whitespace).ok_or_else(bad)?;
        let rest = rest.trim_start();
        let (op, operand) = if let Some(v) = rest.strip_prefix("contains") {
            ("contains", v.trim())
        } else if let Some(v) = rest.strip_prefix("==") {
            ("==", v.trim())
        } else if let Some(v) = rest.strip_prefix("!=") {
            ("!=", v.trim())
        } else {
            return Err(bad());
        };
        let cmp = if op == "!=" { CmpOp::Ne } else { CmpOp::Eq };
        if field == "label" {
            if op == "contains" {
                return Err(bad());
            }
            let value = operand.parse().map_err(|_| bad())?;
            return Ok(SliceRule::Label { op: cmp, value });
        }
        let literal = unquote(operand).ok_or_else(bad)?.to_string();
        Ok(match op {
            "contains" => SliceRule::FieldContains {
                field: field.to_string(),
                needle: literal,
            },
            _ => SliceRule::FieldCmp {
                field: field.to_string(),
                op: cmp,
                value: literal,
            },
        })
    }

    fn field(&self) -> Option<&str> {
        match self {
            SliceRule::Label { .. } => None,
            SliceRule::FieldContains { field, .. } | SliceRule::FieldCmp { field, .. } => {
                Some(field)
            }
        }
    }
}

fn unquote(s: &str) -> Option<&str> {
    let quoted = |q: char| s.len() >= 2 && s.starts_with(q) && s.ends_with(q);
    (quoted('\'') || quoted('"')).then(|| &s[1..s.len() - 1])
}

fn field_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn build_slice(
    store: &EmbeddingStore,
    rule: &SliceRule,
    sidecar: Option<&Sidecar>,
) -> Result<SliceMask> {
    let member = match rule {
        SliceRule::Label { op, value } => store
            .labels()
            .iter()
            .map(|l| (l == value) == (*op == CmpOp::Eq))
            .collect(),
        _ => {
            let sidecar = sidecar.ok_or(Error::MissingSidecar)?;
            if sidecar.rows.len() != store.len() {
                return Err(Error::SidecarLengthMismatch {
                    sidecar: sidecar.rows.len(),
                    store: store.len(),
                });
            }
            let field = rule.field().unwrap();
            sidecar
                .rows
                .iter()
                .enumerate()
                .map(|(row, obj)| {
                    let v = obj.get(field).ok_or_else(|| Error::UnknownField {
                        field: field.to_string(),
                        row,
                    })?;
                    let text = field_text(v);
                    Ok(match rule {
                        SliceRule::FieldContains { needle, .. } => text.contains(needle.as_str()),
                        SliceRule::FieldCmp { op, value, .. } => {
                            (text == *value) == (*op == CmpOp::Eq)
                        }
                        SliceRule::Label { .. } => unreachable!(),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(SliceMask { member })
}
