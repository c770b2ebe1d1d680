//! File-to-file pipeline stages. Each stage reads its declared inputs,
//! writes its outputs and returns a serializable summary; the CLI is a thin
//! layer over these functions.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, predict_topic, ClassifierHead, EvalReport, TrainConfig};
use crate::config::VocabularyConfig;
use crate::corpus::{self, CorpusFormat, QuerySpec};
use crate::embedding::{self, partition_by_topic, EmbeddingMatrix};
use crate::lda::{self, LdaConfig};
use crate::recommend::{self, RecommendOutcome};
use crate::text::{self, TokenizerConfig, Vocabulary};
use crate::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub sb: usize,
    pub elsi: usize,
    pub skipped_empty: usize,
    pub duplicates: usize,
    pub malformed: usize,
    pub manifest: PathBuf,
}

/// Parses the corpus and writes `manifest.jsonl`, `sb.jsonl` and `elsi.jsonl`
/// into `out_dir`.
pub fn ingest(corpus_path: &Path, format: Option<CorpusFormat>, out_dir: &Path, query: &QuerySpec) -> Result<IngestSummary> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(corpus_path));
    let parsed = corpus::parse_corpus(corpus_path, format)?;
    for issue in &parsed.issues {
        log::warn!("{}: {issue}", corpus_path.display());
    }
    let partition = corpus::partition_corpus(&parsed.records, query)?;
    for w in &partition.warnings {
        log::warn!("{w}");
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let manifest = out_dir.join("manifest.jsonl");
    let mut w = create(&manifest)?;
    corpus::write_manifest(&mut w, &partition).map_err(|e| Error::io(&manifest, e))?;
    finish(w, &manifest)?;
    for (name, records) in [("sb.jsonl", &partition.sb_set), ("elsi.jsonl", &partition.elsi_set)] {
        let path = out_dir.join(name);
        let mut w = create(&path)?;
        corpus::write_records_jsonl(&mut w, records).map_err(|e| Error::io(&path, e))?;
        finish(w, &path)?;
    }
    Ok(IngestSummary {
        records: parsed.records.len(),
        sb: partition.sb_set.len(),
        elsi: partition.elsi_set.len(),
        skipped_empty: parsed.skipped_empty(),
        duplicates: parsed.duplicates(),
        malformed: parsed.malformed(),
        manifest,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LdaFitSummary {
    pub documents: usize,
    pub excluded_documents: Vec<String>,
    pub vocabulary_size: usize,
    pub tokens: usize,
    pub topics: usize,
    pub top_words: Vec<Vec<String>>,
}

/// Tokenizes abstracts, builds the vocabulary and fits the topic model.
pub fn lda_fit(
    corpus_path: &Path,
    tokenizer: &TokenizerConfig,
    vocab_config: &VocabularyConfig,
    lda_config: &LdaConfig,
    vocab_out: &Path,
    model_out: &Path,
) -> Result<LdaFitSummary> {
    let parsed = corpus::parse_corpus(corpus_path, CorpusFormat::from_path(corpus_path))?;
    let tokens: Vec<Vec<String>> = parsed
        .records
        .iter()
        .map(|r| text::tokenize(&r.abstract_text, tokenizer))
        .collect();
    let vocab = text::build_vocabulary(&tokens, vocab_config.min_df, vocab_config.max_df_fraction)?;
    let mut docs = Vec::with_capacity(tokens.len());
    let mut excluded = Vec::new();
    for (record, toks) in parsed.records.iter().zip(&tokens) {
        match text::vectorize(&record.id, toks, &vocab) {
            Ok(doc) => docs.push(doc),
            Err(e) => {
                log::warn!("{e}; excluded from the topic model");
                excluded.push(record.id.clone());
            }
        }
    }
    let model = lda::fit_lda(&docs, &vocab, lda_config)?;
    let top_words = (0..model.topics())
        .map(|t| lda::top_words(&model, &vocab, t, 10))
        .collect::<Result<Vec<_>, _>>()?;
    vocab.write_tsv(vocab_out)?;
    lda::write_model(&model, model_out)?;
    Ok(LdaFitSummary {
        documents: docs.len(),
        excluded_documents: excluded,
        vocabulary_size: vocab.len(),
        tokens: docs.iter().map(text::BowDocument::total).sum(),
        topics: model.topics(),
        top_words,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLine {
    pub id: String,
    pub topic: usize,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelSummary {
    pub labeled: usize,
    pub from_fit: usize,
    pub inferred: usize,
    pub unclassifiable: Vec<String>,
    pub histogram: Vec<usize>,
}

/// Labels every record with its highest-scoring topic. Documents the model
/// was fitted on reuse their fitted θ; others are folded in.
pub fn label(
    corpus_path: &Path,
    model_path: &Path,
    vocab_path: &Path,
    tokenizer: &TokenizerConfig,
    out: &Path,
) -> Result<LabelSummary> {
    let model = lda::read_model(model_path)?;
    let vocab = Vocabulary::read_tsv(vocab_path)?;
    model.ensure_vocabulary(&vocab)?;
    let parsed = corpus::parse_corpus(corpus_path, CorpusFormat::from_path(corpus_path))?;
    let fitted: BTreeMap<&str, usize> = model.doc_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut lines = Vec::new();
    let mut summary = LabelSummary {
        labeled: 0,
        from_fit: 0,
        inferred: 0,
        unclassifiable: Vec::new(),
        histogram: vec![0; model.topics()],
    };
    for record in &parsed.records {
        let theta = if let Some(&d) = fitted.get(record.id.as_str()) {
            summary.from_fit += 1;
            model.theta_row(d).to_vec()
        } else {
            let toks = text::tokenize(&record.abstract_text, tokenizer);
            let doc = match text::vectorize(&record.id, &toks, &vocab) {
                Ok(doc) => doc,
                Err(e) => {
                    log::warn!("{e}; left unlabeled");
                    summary.unclassifiable.push(record.id.clone());
                    continue;
                }
            };
            summary.inferred += 1;
            lda::infer_theta(&doc, &model, &model.config)?
        };
        let topic = lda::assign_topic(&theta);
        summary.histogram[topic] += 1;
        lines.push(LabelLine {
            id: record.id.clone(),
            topic,
            theta,
        });
    }
    summary.labeled = lines.len();
    write_labels(out, &lines)?;
    Ok(summary)
}

pub fn write_labels(path: &Path, lines: &[LabelLine]) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        serde_json::to_writer(&mut w, line).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Reads `{"id":…,"topic":…}` lines (any extra keys are ignored).
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, usize>> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        topic: usize,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Artifact {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        if labels.insert(parsed.id.clone(), parsed.topic).is_some() {
            return Err(Error::Artifact {
                path: path.to_path_buf(),
                reason: format!("line {}: duplicate id `{}`", i + 1, parsed.id),
            });
        }
    }
    Ok(labels)
}

/// Reads an embedding file and applies tanh unless it is already marked activated.
pub fn load_activated(path: &Path) -> Result<EmbeddingMatrix> {
    Ok(embedding::read_embeddings(path)?.into_activated())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub holdout: f64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Seeded shuffle of `ids`, holding out `ceil(holdout · n)` of them.
pub fn split_ids(ids: &[String], holdout: f64, seed: u64) -> SplitFile {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((holdout * ids.len() as f64).ceil() as usize).min(ids.len());
    let test = shuffled.split_off(ids.len() - n_test);
    SplitFile {
        seed,
        holdout,
        train: shuffled,
        test,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Scores {
    pub accuracy: f64,
    pub macro_f1: f64,
}

impl From<&EvalReport> for Scores {
    fn from(r: &EvalReport) -> Self {
        Scores {
            accuracy: r.accuracy,
            macro_f1: r.macro_f1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub examples: usize,
    pub unlabeled_skipped: usize,
    pub train_examples: usize,
    pub holdout_examples: usize,
    pub topics: usize,
    pub dim: usize,
    pub loss_history: Vec<f64>,
    pub train_scores: Scores,
    pub holdout_scores: Option<Scores>,
}

fn predictions(head: &ClassifierHead, m: &EmbeddingMatrix) -> Result<Vec<usize>> {
    m.rows()
        .map(|(_, row)| Ok(predict_topic(row, head)?.topic))
        .collect()
}

fn score(head: &ClassifierHead, m: &EmbeddingMatrix, labels: &BTreeMap<String, usize>) -> Result<EvalReport> {
    let y_true: Vec<usize> = m.ids().iter().map(|id| labels[id]).collect();
    let y_pred = predictions(head, m)?;
    let topics = head.topics().max(y_true.iter().max().map_or(0, |m| m + 1));
    Ok(classifier::evaluate(&y_true, &y_pred, topics)?)
}

/// Trains the topic head on labeled embeddings. With `holdout > 0` a seeded
/// fraction is kept out of training and its ids written to `split_out`.
pub fn train_head(
    embeddings_path: &Path,
    labels_path: &Path,
    config: &TrainConfig,
    holdout: f64,
    head_out: &Path,
    split_out: Option<&Path>,
) -> Result<TrainSummary> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(Error::Config(format!("holdout must lie in [0, 1), got {holdout}")));
    }
    let all = load_activated(embeddings_path)?;
    let labels = read_labels(labels_path)?;
    let labeled = all.select(|id| labels.contains_key(id));
    let unlabeled_skipped = all.len() - labeled.len();
    if unlabeled_skipped > 0 {
        log::warn!("{unlabeled_skipped} embeddings have no topic label and are not used for training");
    }
    let split = split_ids(labeled.ids(), holdout, config.seed);
    let test_ids: HashSet<&str> = split.test.iter().map(String::as_str).collect();
    let train_set = labeled.select(|id| !test_ids.contains(id));
    let test_set = labeled.select(|id| test_ids.contains(id));

    let (head, loss_history) = classifier::train(&train_set, &labels, config)?;
    classifier::write_head(&head, head_out)?;
    if let Some(path) = split_out {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &split).map_err(|e| Error::io(path, e.into()))?;
        finish(w, path)?;
    }
    let train_scores = Scores::from(&score(&head, &train_set, &labels)?);
    let holdout_scores = if test_set.is_empty() {
        None
    } else {
        Some(Scores::from(&score(&head, &test_set, &labels)?))
    };
    Ok(TrainSummary {
        examples: labeled.len(),
        unlabeled_skipped,
        train_examples: train_set.len(),
        holdout_examples: test_set.len(),
        topics: head.topics(),
        dim: head.dim(),
        loss_history,
        train_scores,
        holdout_scores,
    })
}

/// Evaluates a head on labeled embeddings, restricted to the split's test
/// ids when a split file is given.
pub fn evaluate_head(head_path: &Path, embeddings_path: &Path, labels_path: &Path, split: Option<&Path>) -> Result<EvalReport> {
    let head = classifier::read_head(head_path)?;
    let labels = read_labels(labels_path)?;
    let mut m = load_activated(embeddings_path)?.select(|id| labels.contains_key(id));
    if let Some(path) = split {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let split: SplitFile = serde_json::from_str(&text).map_err(|e| Error::Artifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let test: HashSet<String> = split.test.into_iter().collect();
        m = m.select(|id| test.contains(id));
    }
    if m.is_empty() {
        return Err(Error::Config("no labeled embeddings to evaluate".into()));
    }
    score(&head, &m, &labels)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexSummary {
    pub topics: usize,
    pub articles: usize,
    pub partition_sizes: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Partitions ELSI embeddings by topic: the head's prediction by default, or
/// the given label file.
pub fn build_index(elsi_path: &Path, head_path: &Path, labels_path: Option<&Path>, out: &Path) -> Result<IndexSummary> {
    let head = classifier::read_head(head_path)?;
    let elsi = load_activated(elsi_path)?;
    if elsi.dim() != head.dim() {
        return Err(Error::Artifact {
            path: elsi_path.to_path_buf(),
            reason: format!("embeddings have D={} but the head expects D={}", elsi.dim(), head.dim()),
        });
    }
    let labels = match labels_path {
        Some(p) => read_labels(p)?,
        None => elsi
            .rows()
            .map(|(id, row)| Ok((id.to_string(), predict_topic(row, &head)?.topic)))
            .collect::<Result<BTreeMap<_, _>>>()?,
    };
    let (index, warnings) = partition_by_topic(&elsi, &labels, head.topics())?;
    for w in &warnings {
        log::warn!("{w}");
    }
    recommend::write_index(&index, out)?;
    Ok(IndexSummary {
        topics: index.topics(),
        articles: index.total_articles(),
        partition_sizes: index.partitions().iter().map(EmbeddingMatrix::len).collect(),
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryResult {
    pub query_id: String,
    #[serde(flatten)]
    pub outcome: RecommendOutcome,
}

/// Answers every row of a query embedding file.
pub fn recommend_queries(
    head_path: &Path,
    index_path: &Path,
    queries_path: &Path,
    k: usize,
    fallback_global: bool,
) -> Result<Vec<QueryResult>> {
    let head = classifier::read_head(head_path)?;
    let index = recommend::read_index(index_path)?;
    let queries = load_activated(queries_path)?;
    queries
        .rows()
        .map(|(id, row)| {
            Ok(QueryResult {
                query_id: id.to_string(),
                outcome: recommend::recommend_for_abstract(row, &head, &index, k, fallback_global)?,
            })
        })
        .collect()
}
