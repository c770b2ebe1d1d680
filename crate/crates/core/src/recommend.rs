//! Exact L1 nearest-neighbor search inside the predicted topic's partition.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::classifier::{predict_topic, ClassifierError, ClassifierHead};
use crate::embedding::{decode_embeddings, encode_embeddings, EmbeddingError, EmbeddingMatrix};

pub const INDEX_MAGIC: &[u8; 4] = b"TIDX";
pub const INDEX_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("dimension mismatch: expected D={expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("topic {topic} out of range (K={topics})")]
    TopicOutOfRange { topic: usize, topics: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no ELSI candidates for topic {topic}{}", probability.map(|p| format!(" (predicted with probability {p:.4})")).unwrap_or_default())]
    NoCandidates { topic: usize, probability: Option<f64> },
    #[error("inconsistent artifacts: {0}")]
    Consistency(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("topic index {path} is invalid: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("topic index {path} has version {found}, expected {expected}")]
    Version { path: PathBuf, found: u16, expected: u16 },
    #[error("cannot access topic index {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64, RecommendError> {
    if a.len() != b.len() {
        return Err(RecommendError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// K partitions of activated ELSI embeddings sharing one width.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicIndex {
    partitions: Vec<EmbeddingMatrix>,
    dim: usize,
}

impl TopicIndex {
    pub fn new(partitions: Vec<EmbeddingMatrix>) -> Result<Self, RecommendError> {
        let dim = partitions
            .first()
            .map(EmbeddingMatrix::dim)
            .ok_or_else(|| RecommendError::Consistency("an index needs at least one topic".into()))?;
        let mut seen = HashSet::new();
        for (t, p) in partitions.iter().enumerate() {
            if p.dim() != dim {
                return Err(RecommendError::Consistency(format!(
                    "partition {t} has D={}, expected {dim}",
                    p.dim()
                )));
            }
            if !p.is_activated() {
                return Err(RecommendError::Consistency(format!("partition {t} is not activated")));
            }
            if let Some(id) = p.ids().iter().find(|id| !seen.insert(id.as_str())) {
                return Err(RecommendError::Consistency(format!("`{id}` appears in more than one partition")));
            }
        }
        Ok(Self { partitions, dim })
    }

    pub fn topics(&self) -> usize {
        self.partitions.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partition(&self, topic: usize) -> Option<&EmbeddingMatrix> {
        self.partitions.get(topic)
    }

    pub fn partitions(&self) -> &[EmbeddingMatrix] {
        &self.partitions
    }

    pub fn total_articles(&self) -> usize {
        self.partitions.iter().map(EmbeddingMatrix::len).sum()
    }

    pub fn topic_of(&self, id: &str) -> Option<usize> {
        self.partitions.iter().position(|p| p.position(id).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    #[serde(rename = "id")]
    pub article_id: String,
    pub distance: f64,
    #[serde(skip)]
    pub topic: usize,
    pub rank: usize,
}

fn by_distance_then_id(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

fn rank(mut scored: Vec<(f64, &str, usize)>, k: usize) -> Vec<Recommendation> {
    scored.sort_by(|a, b| by_distance_then_id(&(a.0, a.1), &(b.0, b.1)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (distance, id, topic))| Recommendation {
            article_id: id.to_string(),
            distance,
            topic,
            rank: i + 1,
        })
        .collect()
}

/// Exhaustive scan of one partition. Results are ordered by (distance, id).
pub fn recommend(query: &[f64], topic: usize, k: usize, index: &TopicIndex) -> Result<Vec<Recommendation>, RecommendError> {
    if k == 0 {
        return Err(RecommendError::ZeroK);
    }
    if query.len() != index.dim {
        return Err(RecommendError::DimensionMismatch {
            expected: index.dim,
            found: query.len(),
        });
    }
    let partition = index.partition(topic).ok_or(RecommendError::TopicOutOfRange {
        topic,
        topics: index.topics(),
    })?;
    if partition.is_empty() {
        return Err(RecommendError::NoCandidates {
            topic,
            probability: None,
        });
    }
    let scored = partition
        .rows()
        .map(|(id, row)| Ok((l1_distance(query, row)?, id, topic)))
        .collect::<Result<Vec<_>, RecommendError>>()?;
    Ok(rank(scored, k))
}

/// Scan across every partition; used only for the out-of-topic fallback.
pub fn recommend_global(query: &[f64], k: usize, index: &TopicIndex) -> Result<Vec<Recommendation>, RecommendError> {
    if k == 0 {
        return Err(RecommendError::ZeroK);
    }
    if query.len() != index.dim {
        return Err(RecommendError::DimensionMismatch {
            expected: index.dim,
            found: query.len(),
        });
    }
    let mut scored = Vec::with_capacity(index.total_articles());
    for (t, p) in index.partitions.iter().enumerate() {
        for (id, row) in p.rows() {
            scored.push((l1_distance(query, row)?, id, t));
        }
    }
    if scored.is_empty() {
        return Err(RecommendError::NoCandidates {
            topic: 0,
            probability: None,
        });
    }
    Ok(rank(scored, k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecommendOutcome {
    pub topic: usize,
    pub topic_probability: f64,
    pub results: Vec<Recommendation>,
    /// Set when the predicted partition was empty and the global fallback ran.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub out_of_topic: bool,
}

/// Predicts the query's topic with `head`, then searches that topic's partition.
pub fn recommend_for_abstract(
    query: &[f64],
    head: &ClassifierHead,
    index: &TopicIndex,
    k: usize,
    fallback_global: bool,
) -> Result<RecommendOutcome, RecommendError> {
    if head.topics() != index.topics() {
        return Err(RecommendError::Consistency(format!(
            "classifier head has K={} topics but the index has {}",
            head.topics(),
            index.topics()
        )));
    }
    if head.dim() != index.dim() {
        return Err(RecommendError::Consistency(format!(
            "classifier head has D={} but the index has D={}",
            head.dim(),
            index.dim()
        )));
    }
    if query.len() != head.dim() {
        return Err(RecommendError::DimensionMismatch {
            expected: head.dim(),
            found: query.len(),
        });
    }
    let prediction = predict_topic(query, head)?;
    let topic_probability = prediction.probability();
    match recommend(query, prediction.topic, k, index) {
        Ok(results) => Ok(RecommendOutcome {
            topic: prediction.topic,
            topic_probability,
            results,
            out_of_topic: false,
        }),
        Err(RecommendError::NoCandidates { topic, .. }) if !fallback_global => Err(RecommendError::NoCandidates {
            topic,
            probability: Some(topic_probability),
        }),
        Err(RecommendError::NoCandidates { .. }) => Ok(RecommendOutcome {
            topic: prediction.topic,
            topic_probability,
            results: recommend_global(query, k, index)?,
            out_of_topic: true,
        }),
        Err(e) => Err(e),
    }
}

/// `TIDX` file: magic, u16 version, u32 K, then per topic a u64 byte length
/// followed by that partition as an `EMB1` blob (all integers LE).
pub fn encode_index(index: &TopicIndex) -> Result<Vec<u8>, EmbeddingError> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
    out.extend_from_slice(&(index.topics() as u32).to_le_bytes());
    for p in &index.partitions {
        let blob = encode_embeddings(p)?;
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    Ok(out)
}

pub fn decode_index(bytes: &[u8], path: &Path) -> Result<TopicIndex, RecommendError> {
    let format = |reason: String| RecommendError::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 10 || &bytes[..4] != INDEX_MAGIC {
        return Err(format("bad magic, expected \"TIDX\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != INDEX_VERSION {
        return Err(RecommendError::Version {
            path: path.to_path_buf(),
            found: version,
            expected: INDEX_VERSION,
        });
    }
    let topics = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let mut pos = 10;
    let mut partitions = Vec::with_capacity(topics.min(1024));
    for t in 0..topics {
        if bytes.len() - pos < 8 {
            return Err(format(format!("truncated before partition {t}")));
        }
        let len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        if bytes.len() - pos < len {
            return Err(format(format!("partition {t} truncated")));
        }
        let matrix =
            decode_embeddings(&bytes[pos..pos + len]).map_err(|e| format(format!("partition {t}: {e}")))?;
        partitions.push(matrix);
        pos += len;
    }
    if pos != bytes.len() {
        return Err(format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    TopicIndex::new(partitions).map_err(|e| format(e.to_string()))
}

pub fn write_index(index: &TopicIndex, path: &Path) -> Result<(), RecommendError> {
    let bytes = encode_index(index).map_err(|e| RecommendError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(|source| RecommendError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_index(path: &Path) -> Result<TopicIndex, RecommendError> {
    let bytes = fs::read(path).map_err(|source| RecommendError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_index(&bytes, path)
}
