//! Softmax topic classifier over document embeddings, trained with Adam on
//! mean cross-entropy, plus accuracy / macro-F1 evaluation.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::util::argmax;

pub const HEAD_MAGIC: &[u8; 4] = b"HEAD";
pub const HEAD_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding `{0}` has no topic label")]
    Unlabeled(String),
    #[error("training needs at least two distinct topics, found {0}")]
    SingleClass(usize),
    #[error("no training examples")]
    NoExamples,
    #[error("dimension mismatch: head expects D={expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("loss became non-finite at epoch {epoch} (step {step})")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("y_true has {true_len} labels but y_pred has {pred_len}")]
    LengthMismatch { true_len: usize, pred_len: usize },
    #[error("label {label} out of range (K={topics})")]
    LabelOutOfRange { label: usize, topics: usize },
    #[error("cannot evaluate zero predictions")]
    EmptyEvaluation,
    #[error("classifier head {path} is invalid: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("classifier head {path} has version {found}, expected {expected}")]
    Version { path: PathBuf, found: u16, expected: u16 },
    #[error("cannot access classifier head {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// K×D weights and K biases, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    topics: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(topics: usize, dim: usize) -> Self {
        Self {
            topics,
            dim,
            weights: vec![0.0; topics * dim],
            bias: vec![0.0; topics],
        }
    }

    pub fn from_parts(topics: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, ClassifierError> {
        if topics == 0 || dim == 0 {
            return Err(ClassifierError::InvalidConfig("K and D must be positive".into()));
        }
        if weights.len() != topics * dim || bias.len() != topics {
            return Err(ClassifierError::InvalidConfig(format!(
                "expected {}×{} weights and {} biases, got {} and {}",
                topics,
                dim,
                topics,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidConfig("non-finite parameter".into()));
        }
        Ok(Self {
            topics,
            dim,
            weights,
            bias,
        })
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self
            .weights
            .chunks(self.dim)
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect())
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub topic: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn probability(&self) -> f64 {
        self.probabilities[self.topic]
    }
}

pub fn predict_topic(x: &[f64], head: &ClassifierHead) -> Result<Prediction, ClassifierError> {
    let probabilities = softmax(&head.logits(x)?);
    Ok(Prediction {
        topic: argmax(&probabilities),
        probabilities,
    })
}

/// Mean cross-entropy of `head` over `(x, label)` pairs.
pub fn mean_cross_entropy(xs: &[&[f64]], labels: &[usize], head: &ClassifierHead) -> Result<f64, ClassifierError> {
    if xs.is_empty() {
        return Err(ClassifierError::NoExamples);
    }
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(labels) {
        let logits = head.logits(x)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - logits[y];
    }
    Ok(total / xs.len() as f64)
}

/// Gradient of the mean cross-entropy with respect to W (K×D) and b (K).
pub fn gradient(xs: &[&[f64]], labels: &[usize], head: &ClassifierHead) -> Result<(Vec<f64>, Vec<f64>), ClassifierError> {
    let (k, d) = (head.topics, head.dim);
    let mut dw = vec![0.0; k * d];
    let mut db = vec![0.0; k];
    if xs.is_empty() {
        return Ok((dw, db));
    }
    for (x, &y) in xs.iter().zip(labels) {
        if y >= k {
            return Err(ClassifierError::LabelOutOfRange { label: y, topics: k });
        }
        let mut p = softmax(&head.logits(x)?);
        p[y] -= 1.0;
        for (c, err) in p.iter().enumerate() {
            db[c] += err;
            for (g, xi) in dw[c * d..(c + 1) * d].iter_mut().zip(x.iter()) {
                *g += err * xi;
            }
        }
    }
    let n = xs.len() as f64;
    dw.iter_mut().chain(db.iter_mut()).for_each(|g| *g /= n);
    Ok((dw, db))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            epochs: 10,
            batch_size: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0 && self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("Adam betas must lie strictly between 0 and 1");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(config: &TrainConfig, params: usize) -> Self {
        Self {
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            epsilon: config.adam_epsilon,
            lr: config.learning_rate,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: impl Iterator<Item = f64>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Epoch-at-a-time trainer. [`train`] runs it for `config.epochs`.
pub struct Trainer<'a> {
    xs: Vec<&'a [f64]>,
    labels: Vec<usize>,
    config: TrainConfig,
    head: ClassifierHead,
    adam: Adam,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(xs: Vec<&'a [f64]>, labels: Vec<usize>, config: &TrainConfig) -> Result<Self, ClassifierError> {
        config.validate()?;
        if xs.is_empty() {
            return Err(ClassifierError::NoExamples);
        }
        let dim = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let topics = labels.iter().max().map_or(0, |m| m + 1);
        let distinct = {
            let mut seen = vec![false; topics];
            labels.iter().for_each(|&l| seen[l] = true);
            seen.iter().filter(|&&s| s).count()
        };
        if distinct < 2 {
            return Err(ClassifierError::SingleClass(distinct));
        }
        let head = ClassifierHead::zeros(topics, dim);
        let adam = Adam::new(config, topics * dim + topics);
        let order = (0..xs.len()).collect();
        Ok(Self {
            xs,
            labels,
            config: config.clone(),
            head,
            adam,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            order,
            epoch: 0,
        })
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn into_head(self) -> ClassifierHead {
        self.head
    }

    /// Runs one pass over the data and returns the full-data mean
    /// cross-entropy of the updated head.
    pub fn run_epoch(&mut self) -> Result<f64, ClassifierError> {
        if self.config.shuffle {
            self.order.shuffle(&mut self.rng);
        }
        let mut bx = Vec::with_capacity(self.config.batch_size);
        let mut by = Vec::with_capacity(self.config.batch_size);
        for (step, batch) in self.order.chunks(self.config.batch_size).enumerate() {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.push(self.xs[i]);
                by.push(self.labels[i]);
            }
            let (dw, db) = gradient(&bx, &by, &self.head)?;
            if dw.iter().chain(&db).any(|g| !g.is_finite()) {
                return Err(ClassifierError::NonFiniteLoss {
                    epoch: self.epoch,
                    step,
                });
            }
            let head = &mut self.head;
            self.adam.step(
                head.weights.iter_mut().chain(head.bias.iter_mut()),
                dw.into_iter().chain(db),
            );
        }
        let loss = mean_cross_entropy(&self.xs, &self.labels, &self.head)?;
        if !loss.is_finite() {
            return Err(ClassifierError::NonFiniteLoss {
                epoch: self.epoch,
                step: self.order.len().div_ceil(self.config.batch_size),
            });
        }
        self.epoch += 1;
        Ok(loss)
    }
}

/// Pairs each embedding row with its label, in matrix order.
pub fn labeled_rows<'a>(
    embeddings: &'a EmbeddingMatrix,
    labels: &BTreeMap<String, usize>,
) -> Result<(Vec<&'a [f64]>, Vec<usize>), ClassifierError> {
    let mut xs = Vec::with_capacity(embeddings.len());
    let mut ys = Vec::with_capacity(embeddings.len());
    for (id, row) in embeddings.rows() {
        let &y = labels.get(id).ok_or_else(|| ClassifierError::Unlabeled(id.to_string()))?;
        xs.push(row);
        ys.push(y);
    }
    Ok((xs, ys))
}

/// Trains a zero-initialized head; returns it with the per-epoch loss.
pub fn train(
    embeddings: &EmbeddingMatrix,
    labels: &BTreeMap<String, usize>,
    config: &TrainConfig,
) -> Result<(ClassifierHead, Vec<f64>), ClassifierError> {
    let (xs, ys) = labeled_rows(embeddings, labels)?;
    let mut trainer = Trainer::new(xs, ys, config)?;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        history.push(trainer.run_epoch()?);
    }
    Ok((trainer.into_head(), history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Rows are true labels, columns predicted labels.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy and macro-F1 over all K classes; every 0/0 ratio counts as 0.
pub fn evaluate(y_true: &[usize], y_pred: &[usize], topics: usize) -> Result<EvalReport, ClassifierError> {
    if y_true.len() != y_pred.len() {
        return Err(ClassifierError::LengthMismatch {
            true_len: y_true.len(),
            pred_len: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(ClassifierError::EmptyEvaluation);
    }
    let mut confusion = vec![vec![0usize; topics]; topics];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= topics {
                return Err(ClassifierError::LabelOutOfRange { label, topics });
            }
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..topics).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassScores> = (0..topics)
        .map(|c| {
            let tp = confusion[c][c];
            let actual: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores { precision, recall, f1 }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / topics as f64;
    Ok(EvalReport {
        confusion,
        accuracy: ratio(correct, y_true.len()),
        macro_f1,
        per_class,
    })
}

/// `HEAD` file: magic, u16 version, u32 K, u32 D, K×D f64 weights, K f64 biases (LE).
pub fn encode_head(head: &ClassifierHead) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + 8 * (head.weights.len() + head.bias.len()));
    out.extend_from_slice(HEAD_MAGIC);
    out.extend_from_slice(&HEAD_VERSION.to_le_bytes());
    out.extend_from_slice(&(head.topics as u32).to_le_bytes());
    out.extend_from_slice(&(head.dim as u32).to_le_bytes());
    for v in head.weights.iter().chain(&head.bias) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_head(bytes: &[u8], path: &Path) -> Result<ClassifierHead, ClassifierError> {
    let format = |reason: String| ClassifierError::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 14 || &bytes[..4] != HEAD_MAGIC {
        return Err(format("bad magic, expected \"HEAD\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != HEAD_VERSION {
        return Err(ClassifierError::Version {
            path: path.to_path_buf(),
            found: version,
            expected: HEAD_VERSION,
        });
    }
    let topics = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = topics
        .checked_mul(dim)
        .and_then(|n| n.checked_add(topics))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(14))
        .ok_or_else(|| format("header sizes overflow".into()))?;
    if bytes.len() != expected {
        return Err(format(format!("expected {expected} bytes for K={topics}, D={dim}, found {}", bytes.len())));
    }
    let values: Vec<f64> = bytes[14..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (w, b) = values.split_at(topics * dim);
    ClassifierHead::from_parts(topics, dim, w.to_vec(), b.to_vec()).map_err(|e| format(e.to_string()))
}

pub fn write_head(head: &ClassifierHead, path: &Path) -> Result<(), ClassifierError> {
    fs::write(path, encode_head(head)).map_err(|source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_head(path: &Path) -> Result<ClassifierHead, ClassifierError> {
    let bytes = fs::read(path).map_err(|source| ClassifierError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_head(&bytes, path)
}
