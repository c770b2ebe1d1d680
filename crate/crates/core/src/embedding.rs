//! Document embeddings: pooling, tanh activation, the `EMB1` interchange
//! format and the split into per-topic partitions.
//!
//! # `EMB1` layout (all integers little-endian)
//!
//! | field          | encoding                                   |
//! |----------------|--------------------------------------------|
//! | magic          | `b"EMB1"`                                  |
//! | version        | u16 (currently 1)                          |
//! | D              | u32                                        |
//! | N              | u32                                        |
//! | encoder_name   | u16 byte length + UTF-8                    |
//! | activated      | u8 (0 or 1)                                |
//! | N records      | u16 byte length + UTF-8 id, D × f32 LE     |
//!
//! A JSONL variant is also accepted on read: a header object
//! `{"format":"EMB1","version":1,"dim":D,"encoder_name":…,"activated":…}`
//! followed by one `{"id":…,"vector":[…]}` object per line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recommend::TopicIndex;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("invalid embedding batch: {0}")]
    InvalidBatch(String),
    #[error("document {doc} has no attended token positions")]
    EmptyMask { doc: usize },
    #[error("invalid embedding matrix: {0}")]
    InvalidMatrix(String),
    #[error("bad magic {found:?}, expected \"EMB1\"")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported embedding format version {found} (expected {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },
    #[error("file truncated while reading {what}")]
    Truncated { what: String },
    #[error("row {row} (`{id}`): non-finite value at column {col}")]
    NonFinite { row: usize, id: String, col: usize },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: expected {expected} values, found {found}")]
    DimensionMismatch { row: usize, expected: usize, found: usize },
    #[error("row {row}: value {value} outside [-1, 1] in an activated matrix")]
    NotActivated { row: usize, value: f64 },
    #[error("row {row}: invalid UTF-8 id")]
    InvalidUtf8 { row: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("malformed JSONL embedding file at line {line}: {reason}")]
    Jsonl { line: usize, reason: String },
    #[error("{what} too large for the interchange format")]
    TooLarge { what: &'static str },
    #[error("embedding `{id}` has no topic label")]
    Unlabeled { id: String },
    #[error("label {label} for `{id}` is out of range (K={topics})")]
    LabelOutOfRange { id: String, label: usize, topics: usize },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<EmbeddingError>,
    },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl EmbeddingError {
    fn at(self, path: &Path) -> Self {
        EmbeddingError::File {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolStrategy {
    #[default]
    FirstToken,
    Mean,
}

/// Token-level encoder output for N documents, T positions, D features.
#[derive(Debug, Clone)]
pub struct TokenEmbeddingBatch {
    pub ids: Vec<String>,
    pub tokens: usize,
    pub dim: usize,
    /// N×T×D, row-major.
    pub values: Vec<f64>,
    /// N×T; true marks a real token.
    pub attention_mask: Vec<bool>,
}

impl TokenEmbeddingBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn validate(&self) -> Result<(), EmbeddingError> {
        let n = self.ids.len();
        if self.dim == 0 || self.tokens == 0 {
            return Err(EmbeddingError::InvalidBatch("T and D must be positive".into()));
        }
        if self.values.len() != n * self.tokens * self.dim {
            return Err(EmbeddingError::InvalidBatch(format!(
                "expected {}×{}×{} values, found {}",
                n,
                self.tokens,
                self.dim,
                self.values.len()
            )));
        }
        if self.attention_mask.len() != n * self.tokens {
            return Err(EmbeddingError::InvalidBatch(format!(
                "attention mask has {} entries, expected {}",
                self.attention_mask.len(),
                n * self.tokens
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidBatch("non-finite token embedding".into()));
        }
        Ok(())
    }
}

/// N×D document embeddings with aligned ids. Values are kept in 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
    encoder_name: String,
    activated: bool,
}

impl EmbeddingMatrix {
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        values: Vec<f64>,
        encoder_name: impl Into<String>,
        activated: bool,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::InvalidMatrix("dimension must be positive".into()));
        }
        if values.len() != ids.len() * dim {
            return Err(EmbeddingError::InvalidMatrix(format!(
                "{} ids × D={} needs {} values, found {}",
                ids.len(),
                dim,
                ids.len() * dim,
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(EmbeddingError::InvalidMatrix(format!("row {row}: empty id")));
            }
            if !seen.insert(id.as_str()) {
                return Err(EmbeddingError::DuplicateId { row, id: id.clone() });
            }
            let vector = &values[row * dim..(row + 1) * dim];
            if let Some(col) = vector.iter().position(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite {
                    row,
                    id: id.clone(),
                    col,
                });
            }
            if activated {
                if let Some(&value) = vector.iter().find(|v| v.abs() > 1.0) {
                    return Err(EmbeddingError::NotActivated { row, value });
                }
            }
        }
        Ok(Self {
            ids,
            dim,
            values,
            encoder_name: encoder_name.into(),
            activated,
        })
    }

    /// An N=0 matrix of the given width.
    pub fn empty(dim: usize, encoder_name: impl Into<String>, activated: bool) -> Self {
        Self {
            ids: Vec::new(),
            dim,
            values: Vec::new(),
            encoder_name: encoder_name.into(),
            activated,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    pub fn is_activated(&self) -> bool {
        self.activated
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.values.chunks(self.dim))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn pooled(&self, i: usize) -> PooledEmbedding {
        PooledEmbedding {
            source_id: self.ids[i].clone(),
            vector: self.row(i).to_vec(),
        }
    }

    /// Applies tanh once; a matrix already marked activated is returned unchanged.
    pub fn into_activated(mut self) -> Self {
        if !self.activated {
            self.values.iter_mut().for_each(|v| *v = v.tanh());
            self.activated = true;
        }
        self
    }

    /// Rows whose id satisfies `keep`, in their original order.
    pub fn select(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (id, row) in self.rows() {
            if keep(id) {
                ids.push(id.to_string());
                values.extend_from_slice(row);
            }
        }
        Self {
            ids,
            dim: self.dim,
            values,
            encoder_name: self.encoder_name.clone(),
            activated: self.activated,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PooledEmbedding {
    pub source_id: String,
    pub vector: Vec<f64>,
}

/// Pools each document to one vector and applies tanh elementwise.
pub fn pool_and_activate(batch: &TokenEmbeddingBatch, strategy: PoolStrategy) -> Result<EmbeddingMatrix, EmbeddingError> {
    batch.validate()?;
    let (t, d) = (batch.tokens, batch.dim);
    let mut values = Vec::with_capacity(batch.len() * d);
    for doc in 0..batch.len() {
        let mask = &batch.attention_mask[doc * t..(doc + 1) * t];
        let attended = mask.iter().filter(|&&m| m).count();
        if attended == 0 {
            return Err(EmbeddingError::EmptyMask { doc });
        }
        let token = |pos: usize| &batch.values[(doc * t + pos) * d..(doc * t + pos + 1) * d];
        let pooled: Vec<f64> = match strategy {
            PoolStrategy::FirstToken => token(0).to_vec(),
            PoolStrategy::Mean => {
                let mut acc = vec![0.0; d];
                for pos in (0..t).filter(|&p| mask[p]) {
                    acc.iter_mut().zip(token(pos)).for_each(|(a, x)| *a += x);
                }
                acc.into_iter().map(|a| a / attended as f64).collect()
            }
        };
        values.extend(pooled.into_iter().map(f64::tanh));
    }
    EmbeddingMatrix::new(batch.ids.clone(), d, values, "in-engine", true)
}

/// Encodes a matrix as `EMB1` bytes. Values are narrowed to f32.
pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Result<Vec<u8>, EmbeddingError> {
    let dim = u32::try_from(matrix.dim).map_err(|_| EmbeddingError::TooLarge { what: "D" })?;
    let n = u32::try_from(matrix.len()).map_err(|_| EmbeddingError::TooLarge { what: "N" })?;
    let mut out = Vec::with_capacity(16 + matrix.len() * (matrix.dim * 4 + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    put_str(&mut out, &matrix.encoder_name, "encoder_name")?;
    out.push(u8::from(matrix.activated));
    for (id, row) in matrix.rows() {
        put_str(&mut out, id, "id")?;
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn put_str(out: &mut Vec<u8>, s: &str, what: &'static str) -> Result<(), EmbeddingError> {
    let len = u16::try_from(s.len()).map_err(|_| EmbeddingError::TooLarge { what })?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], EmbeddingError> {
        if self.buf.len() - self.pos < n {
            return Err(EmbeddingError::Truncated { what: what() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, EmbeddingError> {
        Ok(u16::from_le_bytes(self.take(2, || what.to_string())?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, EmbeddingError> {
        Ok(u32::from_le_bytes(self.take(4, || what.to_string())?.try_into().unwrap()))
    }
}

/// Decodes `EMB1` bytes, or the JSONL variant when the input starts with `{`.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    if bytes.first() == Some(&b'{') {
        return decode_jsonl(bytes);
    }
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EmbeddingError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let mut cur = Cursor { buf: bytes, pos: 4 };
    let version = cur.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(EmbeddingError::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dim = cur.u32("D")? as usize;
    let n = cur.u32("N")? as usize;
    if dim == 0 {
        return Err(EmbeddingError::InvalidMatrix("header declares D=0".into()));
    }
    let name_len = cur.u16("encoder_name length")? as usize;
    let encoder_name = std::str::from_utf8(cur.take(name_len, || "encoder_name".into())?)
        .map_err(|_| EmbeddingError::InvalidMatrix("encoder_name is not UTF-8".into()))?
        .to_string();
    let activated = match cur.take(1, || "activated flag".into())?[0] {
        0 => false,
        1 => true,
        other => return Err(EmbeddingError::InvalidMatrix(format!("activated flag is {other}"))),
    };

    let mut ids = Vec::with_capacity(n.min(1 << 20));
    let mut values = Vec::with_capacity(n.min(1 << 20) * dim.min(4096));
    let mut seen = HashSet::new();
    for row in 0..n {
        let id_len = cur.u16(&format!("row {row} id length"))? as usize;
        let id = std::str::from_utf8(cur.take(id_len, || format!("row {row} id"))?)
            .map_err(|_| EmbeddingError::InvalidUtf8 { row })?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(EmbeddingError::DuplicateId { row, id });
        }
        let raw = cur.take(dim * 4, || format!("row {row} (`{id}`) values"))?;
        for (col, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(EmbeddingError::NonFinite { row, id, col });
            }
            values.push(f64::from(v));
        }
        ids.push(id);
    }
    if cur.pos != bytes.len() {
        return Err(EmbeddingError::TrailingBytes(bytes.len() - cur.pos));
    }
    EmbeddingMatrix::new(ids, dim, values, encoder_name, activated)
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    format: String,
    version: u16,
    dim: usize,
    #[serde(default)]
    encoder_name: String,
    #[serde(default)]
    activated: bool,
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: String,
    vector: Vec<f64>,
}

fn decode_jsonl(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EmbeddingError::Jsonl {
        line: 0,
        reason: e.to_string(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(EmbeddingError::Jsonl {
        line: 1,
        reason: "missing header".into(),
    })?;
    let header: JsonlHeader = serde_json::from_str(first).map_err(|e| EmbeddingError::Jsonl {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.format != "EMB1" {
        return Err(EmbeddingError::BadMagic {
            found: header.format.into_bytes(),
        });
    }
    if header.version != FORMAT_VERSION {
        return Err(EmbeddingError::UnsupportedVersion {
            found: header.version,
            expected: FORMAT_VERSION,
        });
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (row, (i, line)) in lines.enumerate() {
        let parsed: JsonlRow = serde_json::from_str(line).map_err(|e| EmbeddingError::Jsonl {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if parsed.vector.len() != header.dim {
            return Err(EmbeddingError::DimensionMismatch {
                row,
                expected: header.dim,
                found: parsed.vector.len(),
            });
        }
        if let Some(col) = parsed.vector.iter().position(|v| !(*v as f32).is_finite()) {
            return Err(EmbeddingError::NonFinite {
                row,
                id: parsed.id,
                col,
            });
        }
        values.extend(parsed.vector.iter().map(|&v| f64::from(v as f32)));
        ids.push(parsed.id);
    }
    EmbeddingMatrix::new(ids, header.dim, values, header.encoder_name, header.activated)
}

/// JSONL rendering of a matrix (header line plus one row per line).
pub fn encode_embeddings_jsonl(matrix: &EmbeddingMatrix) -> String {
    let header = JsonlHeader {
        format: "EMB1".into(),
        version: FORMAT_VERSION,
        dim: matrix.dim,
        encoder_name: matrix.encoder_name.clone(),
        activated: matrix.activated,
    };
    let mut out = serde_json::to_string(&header).unwrap();
    out.push('\n');
    for (id, row) in matrix.rows() {
        let row = JsonlRow {
            id: id.to_string(),
            vector: row.iter().map(|&v| f64::from(v as f32)).collect(),
        };
        out.push_str(&serde_json::to_string(&row).unwrap());
        out.push('\n');
    }
    out
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<(), EmbeddingError> {
    let bytes = encode_embeddings(matrix).map_err(|e| e.at(path))?;
    fs::write(path, bytes).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    let bytes = fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_embeddings(&bytes).map_err(|e| e.at(path))
}

/// Splits an activated matrix into K per-topic partitions.
///
/// Returns the index together with a warning for every empty partition.
pub fn partition_by_topic(
    matrix: &EmbeddingMatrix,
    labels: &BTreeMap<String, usize>,
    topics: usize,
) -> Result<(TopicIndex, Vec<String>), EmbeddingError> {
    if topics == 0 {
        return Err(EmbeddingError::InvalidMatrix("K must be at least 1".into()));
    }
    if !matrix.activated {
        return Err(EmbeddingError::InvalidMatrix(
            "partitioned embeddings must be tanh-activated".into(),
        ));
    }
    let mut assigned = Vec::with_capacity(matrix.len());
    for id in &matrix.ids {
        let &label = labels.get(id).ok_or_else(|| EmbeddingError::Unlabeled { id: id.clone() })?;
        if label >= topics {
            return Err(EmbeddingError::LabelOutOfRange {
                id: id.clone(),
                label,
                topics,
            });
        }
        assigned.push(label);
    }
    let partitions: Vec<EmbeddingMatrix> = (0..topics)
        .map(|t| {
            let mut it = assigned.iter();
            matrix.select(|_| *it.next().unwrap() == t)
        })
        .collect();
    let warnings = partitions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_empty())
        .map(|(t, _)| format!("topic {t} has no ELSI embeddings"))
        .collect();
    let index = TopicIndex::new(partitions).map_err(|e| EmbeddingError::InvalidMatrix(e.to_string()))?;
    Ok((index, warnings))
}
