//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Each token's topic is resampled from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + Vβ)
//! ```
//!
//! with all counts excluding the token being resampled. Point estimates are
//! `θ_dk = (n_dk + α) / (n_d + Kα)` and `φ_kw = (n_kw + β) / (n_k + Vβ)`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{BowDocument, Vocabulary};
use crate::util::argmax;

pub const MODEL_FORMAT: &str = "elsi-rec-lda";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot fit a topic model on zero documents")]
    NoDocuments,
    #[error("document `{0}` has no tokens")]
    EmptyDocument(String),
    #[error("{topics} topics requested but the corpus has only {tokens} tokens")]
    TooManyTopics { topics: usize, tokens: usize },
    #[error("vocabulary must contain at least 2 tokens, found {0}")]
    VocabularyTooSmall(usize),
    #[error("document `{doc_id}` references word index {word} outside the vocabulary (V={vocab_size})")]
    WordOutOfRange { doc_id: String, word: usize, vocab_size: usize },
    #[error("topic {topic} out of range (K={topics})")]
    TopicOutOfRange { topic: usize, topics: usize },
    #[error("document `{0}` has no in-vocabulary tokens and cannot be classified")]
    Unclassifiable(String),
    #[error("cannot access LDA model {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("LDA model {path} is invalid: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("LDA model {path} has format version {found}, expected {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },
    #[error("LDA model was fitted with vocabulary {expected}, but the supplied vocabulary hashes to {found}")]
    VocabularyMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Average θ/φ over every post-burn-in sweep instead of using the final state.
    pub average_samples: bool,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            topics: 5,
            alpha: 0.1,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed: 42,
            average_samples: false,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<(), LdaError> {
        let bad = |m: String| Err(LdaError::InvalidConfig(m));
        if self.topics == 0 {
            return bad("topics must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        Ok(())
    }
}

/// Fitted model plus the sampler state it was estimated from.
///
/// `n_dk` is D×K and `n_kw`, `phi` are K×V, all row-major. `words[d]` holds
/// document d's token stream and `z[d]` the matching topic assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModelState {
    pub config: LdaConfig,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub doc_ids: Vec<String>,
    pub words: Vec<Vec<usize>>,
    pub z: Vec<Vec<usize>>,
    pub n_dk: Vec<u32>,
    pub n_kw: Vec<u32>,
    pub n_k: Vec<u32>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl TopicModelState {
    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn theta_row(&self, doc: usize) -> &[f64] {
        let k = self.topics();
        &self.theta[doc * k..(doc + 1) * k]
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        &self.phi[topic * self.vocab_size..(topic + 1) * self.vocab_size]
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id)
    }

    /// Recomputes the count tables from `z` and compares them with the stored ones.
    pub fn check_consistency(&self) -> Result<(), String> {
        let (n_dk, n_kw, n_k) = recount(&self.words, &self.z, self.topics(), self.vocab_size)?;
        if n_dk != self.n_dk {
            return Err("n_dk does not match z".into());
        }
        if n_kw != self.n_kw {
            return Err("n_kw does not match z".into());
        }
        if n_k != self.n_k {
            return Err("n_k does not match z".into());
        }
        Ok(())
    }

    /// Every θ and φ row is non-negative and sums to 1 within `tol`.
    pub fn check_normalization(&self, tol: f64) -> Result<(), String> {
        let k = self.topics();
        for (d, row) in self.theta.chunks(k).enumerate() {
            check_simplex(row, tol).map_err(|e| format!("theta row {d}: {e}"))?;
        }
        for (t, row) in self.phi.chunks(self.vocab_size).enumerate() {
            check_simplex(row, tol).map_err(|e| format!("phi row {t}: {e}"))?;
        }
        Ok(())
    }

    pub fn ensure_vocabulary(&self, vocab: &Vocabulary) -> Result<(), LdaError> {
        let found = vocab.content_hash();
        if found != self.vocab_hash {
            return Err(LdaError::VocabularyMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}

fn check_simplex(row: &[f64], tol: f64) -> Result<(), String> {
    if let Some(v) = row.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(format!("negative or NaN entry {v}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

type Counts = (Vec<u32>, Vec<u32>, Vec<u32>);

fn recount(words: &[Vec<usize>], z: &[Vec<usize>], k: usize, v: usize) -> Result<Counts, String> {
    if words.len() != z.len() {
        return Err("z and words disagree on document count".into());
    }
    let mut n_dk = vec![0u32; words.len() * k];
    let mut n_kw = vec![0u32; k * v];
    let mut n_k = vec![0u32; k];
    for (d, (ws, zs)) in words.iter().zip(z).enumerate() {
        if ws.len() != zs.len() {
            return Err(format!("document {d}: z has {} entries for {} tokens", zs.len(), ws.len()));
        }
        for (&w, &t) in ws.iter().zip(zs) {
            if t >= k || w >= v {
                return Err(format!("document {d}: assignment ({t}, {w}) out of range"));
            }
            n_dk[d * k + t] += 1;
            n_kw[t * v + w] += 1;
            n_k[t] += 1;
        }
    }
    Ok((n_dk, n_kw, n_k))
}

/// Draws an index with probability proportional to `weights`.
fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Collapsed Gibbs sampler. [`fit_lda`] drives it end to end; it is exposed
/// so callers can observe the state between sweeps.
pub struct GibbsSampler {
    config: LdaConfig,
    vocab_size: usize,
    vocab_hash: String,
    doc_ids: Vec<String>,
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<u32>,
    n_kw: Vec<u32>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
    sweeps: usize,
    weights: Vec<f64>,
    theta_sum: Vec<f64>,
    phi_sum: Vec<f64>,
    samples: usize,
}

impl GibbsSampler {
    pub fn new(docs: &[BowDocument], vocab: &Vocabulary, config: &LdaConfig) -> Result<Self, LdaError> {
        config.validate()?;
        if docs.is_empty() {
            return Err(LdaError::NoDocuments);
        }
        let v = vocab.len();
        if v < 2 {
            return Err(LdaError::VocabularyTooSmall(v));
        }
        let k = config.topics;
        let mut words = Vec::with_capacity(docs.len());
        for doc in docs {
            if doc.counts.is_empty() {
                return Err(LdaError::EmptyDocument(doc.doc_id.clone()));
            }
            if let Some(&w) = doc.counts.keys().find(|&&w| w >= v) {
                return Err(LdaError::WordOutOfRange {
                    doc_id: doc.doc_id.clone(),
                    word: w,
                    vocab_size: v,
                });
            }
            words.push(doc.expand());
        }
        let tokens: usize = words.iter().map(Vec::len).sum();
        if k > tokens {
            return Err(LdaError::TooManyTopics { topics: k, tokens });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let z: Vec<Vec<usize>> = words
            .iter()
            .map(|ws| ws.iter().map(|_| rng.gen_range(0..k)).collect())
            .collect();
        let (n_dk, n_kw, n_k) = recount(&words, &z, k, v).expect("freshly sampled assignments are in range");

        Ok(Self {
            config: config.clone(),
            vocab_size: v,
            vocab_hash: vocab.content_hash(),
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            words,
            z,
            n_dk,
            n_kw,
            n_k,
            rng,
            sweeps: 0,
            weights: vec![0.0; k],
            theta_sum: Vec::new(),
            phi_sum: Vec::new(),
            samples: 0,
        })
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps
    }

    /// Resamples every token once, documents and tokens in order.
    pub fn sweep(&mut self) {
        let k = self.config.topics;
        let v = self.vocab_size;
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let v_beta = v as f64 * beta;
        for d in 0..self.words.len() {
            for i in 0..self.words[d].len() {
                let w = self.words[d][i];
                let old = self.z[d][i];
                self.n_dk[d * k + old] -= 1;
                self.n_kw[old * v + w] -= 1;
                self.n_k[old] -= 1;

                for t in 0..k {
                    self.weights[t] = (self.n_dk[d * k + t] as f64 + alpha) * (self.n_kw[t * v + w] as f64 + beta)
                        / (self.n_k[t] as f64 + v_beta);
                }
                let new = sample_index(&mut self.rng, &self.weights);

                self.z[d][i] = new;
                self.n_dk[d * k + new] += 1;
                self.n_kw[new * v + w] += 1;
                self.n_k[new] += 1;
            }
        }
        self.sweeps += 1;

        if self.config.average_samples && self.sweeps > self.config.burn_in {
            let (theta, phi) = self.estimates();
            if self.theta_sum.is_empty() {
                self.theta_sum = theta;
                self.phi_sum = phi;
            } else {
                self.theta_sum.iter_mut().zip(theta).for_each(|(s, x)| *s += x);
                self.phi_sum.iter_mut().zip(phi).for_each(|(s, x)| *s += x);
            }
            self.samples += 1;
        }
    }

    fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.config.topics;
        let v = self.vocab_size;
        let alpha = self.config.alpha;
        let beta = self.config.beta;
        let mut theta = Vec::with_capacity(self.words.len() * k);
        for (d, ws) in self.words.iter().enumerate() {
            let denom = ws.len() as f64 + k as f64 * alpha;
            theta.extend((0..k).map(|t| (self.n_dk[d * k + t] as f64 + alpha) / denom));
        }
        let mut phi = Vec::with_capacity(k * v);
        for t in 0..k {
            let denom = self.n_k[t] as f64 + v as f64 * beta;
            phi.extend((0..v).map(|w| (self.n_kw[t * v + w] as f64 + beta) / denom));
        }
        (theta, phi)
    }

    /// Snapshot of the current state with point estimates from the current counts.
    pub fn snapshot(&self) -> TopicModelState {
        let (theta, phi) = self.estimates();
        TopicModelState {
            config: self.config.clone(),
            vocab_size: self.vocab_size,
            vocab_hash: self.vocab_hash.clone(),
            doc_ids: self.doc_ids.clone(),
            words: self.words.clone(),
            z: self.z.clone(),
            n_dk: self.n_dk.clone(),
            n_kw: self.n_kw.clone(),
            n_k: self.n_k.clone(),
            theta,
            phi,
        }
    }

    pub fn finish(self) -> TopicModelState {
        let mut state = self.snapshot();
        if self.samples > 0 {
            let n = self.samples as f64;
            state.theta = self.theta_sum.iter().map(|s| s / n).collect();
            state.phi = self.phi_sum.iter().map(|s| s / n).collect();
        }
        state
    }
}

/// Runs `config.iterations` Gibbs sweeps. Identical inputs and seed give a
/// bit-identical state.
pub fn fit_lda(docs: &[BowDocument], vocab: &Vocabulary, config: &LdaConfig) -> Result<TopicModelState, LdaError> {
    let mut sampler = GibbsSampler::new(docs, vocab, config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    let state = sampler.finish();
    debug_assert!(state.check_consistency().is_ok());
    Ok(state)
}

/// Folds an unseen document into a fitted model, holding φ fixed.
pub fn infer_theta(doc: &BowDocument, model: &TopicModelState, config: &LdaConfig) -> Result<Vec<f64>, LdaError> {
    config.validate()?;
    let k = model.topics();
    let v = model.vocab_size;
    if doc.counts.is_empty() {
        return Err(LdaError::Unclassifiable(doc.doc_id.clone()));
    }
    if let Some(&w) = doc.counts.keys().find(|&&w| w >= v) {
        return Err(LdaError::WordOutOfRange {
            doc_id: doc.doc_id.clone(),
            word: w,
            vocab_size: v,
        });
    }
    let alpha = model.config.alpha;
    let words = doc.expand();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z: Vec<usize> = words.iter().map(|_| rng.gen_range(0..k)).collect();
    let mut n_dk = vec![0u32; k];
    for &t in &z {
        n_dk[t] += 1;
    }
    let mut weights = vec![0.0; k];
    let estimate = |n_dk: &[u32]| -> Vec<f64> {
        let denom = words.len() as f64 + k as f64 * alpha;
        n_dk.iter().map(|&n| (n as f64 + alpha) / denom).collect()
    };
    let mut sum = vec![0.0; k];
    let mut samples = 0usize;
    for sweep in 1..=config.iterations {
        for (i, &w) in words.iter().enumerate() {
            n_dk[z[i]] -= 1;
            for t in 0..k {
                weights[t] = (n_dk[t] as f64 + alpha) * model.phi[t * v + w];
            }
            let new = sample_index(&mut rng, &weights);
            z[i] = new;
            n_dk[new] += 1;
        }
        if config.average_samples && sweep > config.burn_in {
            sum.iter_mut().zip(estimate(&n_dk)).for_each(|(s, x)| *s += x);
            samples += 1;
        }
    }
    if samples > 0 {
        Ok(sum.into_iter().map(|s| s / samples as f64).collect())
    } else {
        Ok(estimate(&n_dk))
    }
}

/// Index of the highest-scoring topic; ties go to the lowest index.
pub fn assign_topic(theta: &[f64]) -> usize {
    argmax(theta)
}

/// The `n` words with the highest φ in `topic`, descending, ties by token text.
pub fn top_words(model: &TopicModelState, vocab: &Vocabulary, topic: usize, n: usize) -> Result<Vec<String>, LdaError> {
    if topic >= model.topics() {
        return Err(LdaError::TopicOutOfRange {
            topic,
            topics: model.topics(),
        });
    }
    if n == 0 {
        return Err(LdaError::InvalidConfig("n must be at least 1".into()));
    }
    if vocab.len() != model.vocab_size {
        return Err(LdaError::VocabularyMismatch {
            expected: model.vocab_hash.clone(),
            found: vocab.content_hash(),
        });
    }
    let row = model.phi_row(topic);
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| {
        row[b]
            .total_cmp(&row[a])
            .then_with(|| vocab.token(a).cmp(&vocab.token(b)))
    });
    Ok(order
        .into_iter()
        .take(n)
        .map(|i| vocab.token(i).unwrap_or_default().to_string())
        .collect())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: LdaConfig,
    vocab_size: usize,
    vocab_hash: String,
    doc_ids: Vec<String>,
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<Vec<u32>>,
    n_kw: Vec<Vec<u32>>,
    n_k: Vec<u32>,
    theta: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
}

fn rows<T: Clone>(flat: &[T], width: usize) -> Vec<Vec<T>> {
    flat.chunks(width).map(<[T]>::to_vec).collect()
}

fn flatten<T: Clone>(rows: &[Vec<T>], width: usize) -> Result<Vec<T>, String> {
    if let Some(r) = rows.iter().position(|r| r.len() != width) {
        return Err(format!("row {r} has length {}, expected {width}", rows[r].len()));
    }
    Ok(rows.concat())
}

/// Serializes the model as a JSON document (`format`/`version` header first).
pub fn model_to_json(model: &TopicModelState) -> String {
    let k = model.topics();
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        config: model.config.clone(),
        vocab_size: model.vocab_size,
        vocab_hash: model.vocab_hash.clone(),
        doc_ids: model.doc_ids.clone(),
        words: model.words.clone(),
        z: model.z.clone(),
        n_dk: rows(&model.n_dk, k),
        n_kw: rows(&model.n_kw, model.vocab_size),
        n_k: model.n_k.clone(),
        theta: rows(&model.theta, k),
        phi: rows(&model.phi, model.vocab_size),
    };
    serde_json::to_string(&file).expect("model serializes")
}

pub fn write_model(model: &TopicModelState, path: &Path) -> Result<(), LdaError> {
    fs::write(path, model_to_json(model)).map_err(|source| LdaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_model(path: &Path) -> Result<TopicModelState, LdaError> {
    let format_err = |reason: String| LdaError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|source| LdaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header: serde_json::Value = serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
    if header.get("format").and_then(|f| f.as_str()) != Some(MODEL_FORMAT) {
        return Err(format_err(format!("missing `format: {MODEL_FORMAT}` header")));
    }
    let version = header.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != MODEL_VERSION {
        return Err(LdaError::Version {
            path: path.to_path_buf(),
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(header).map_err(|e| format_err(e.to_string()))?;
    file.config.validate()?;
    let k = file.config.topics;
    let v = file.vocab_size;
    let model = TopicModelState {
        n_dk: flatten(&file.n_dk, k).map_err(|e| format_err(format!("n_dk: {e}")))?,
        n_kw: flatten(&file.n_kw, v).map_err(|e| format_err(format!("n_kw: {e}")))?,
        theta: flatten(&file.theta, k).map_err(|e| format_err(format!("theta: {e}")))?,
        phi: flatten(&file.phi, v).map_err(|e| format_err(format!("phi: {e}")))?,
        config: file.config,
        vocab_size: v,
        vocab_hash: file.vocab_hash,
        doc_ids: file.doc_ids,
        words: file.words,
        z: file.z,
        n_k: file.n_k,
    };
    if model.theta.len() != model.doc_ids.len() * k || model.phi.len() != k * v {
        return Err(format_err("theta/phi shapes disagree with header".into()));
    }
    model.check_consistency().map_err(format_err)?;
    model.check_normalization(1e-9).map_err(format_err)?;
    Ok(model)
}
