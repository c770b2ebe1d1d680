mod common;

use std::collections::BTreeMap;
use std::fs;

use common::{fixture, run_mini_pipeline};
use elsi_rec::classifier::{predict_topic, read_head};
use elsi_rec::corpus::{parse_corpus, CorpusFormat};
use elsi_rec::embedding::{read_embeddings, EmbeddingError};
use elsi_rec::lda::read_model;
use elsi_rec::pipeline::{self, read_labels};
use elsi_rec::recommend::read_index;
use elsi_rec::text::{build_vocabulary, tokenize, vectorize, TokenizerConfig, Vocabulary};

#[test]
fn vectorize_matches_hand_tally() {
    let corpus = parse_corpus(&fixture("mini_corpus.jsonl"), CorpusFormat::Jsonl).unwrap();
    let tok = TokenizerConfig::default();
    let tokens: Vec<Vec<String>> = corpus.records.iter().map(|r| tokenize(&r.abstract_text, &tok)).collect();
    let vocab = build_vocabulary(&tokens, 2, 0.95).unwrap();
    let doc = vectorize("mc01", &tokens[0], &vocab).unwrap();

    // mc01: "We construct a genetic toggle switch from orthogonal repressors in
    // Escherichia coli. The circuit shows bistable expression, and promoter
    // strength tunes the switching threshold. Repressor cooperativity shapes
    // the bistable response of the circuit." Counted by hand against the
    // df >= 2 vocabulary; toggle, orthogonal, escherichia, coli, shows, tunes,
    // switching, cooperativity and shapes appear in no other abstract.
    let expected: BTreeMap<&str, u32> = [
        ("bistable", 2),
        ("circuit", 2),
        ("expression", 1),
        ("genetic", 1),
        ("promoter", 1),
        ("repressor", 1),
        ("repressors", 1),
        ("response", 1),
        ("strength", 1),
        ("switch", 1),
        ("threshold", 1),
    ]
    .into_iter()
    .collect();
    let got: BTreeMap<&str, u32> = doc.counts.iter().map(|(&i, &c)| (vocab.token(i).unwrap(), c)).collect();
    assert_eq!(got, expected);
    assert_eq!(doc.total(), 13);
}

#[test]
fn artifacts_are_readable_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    run_mini_pipeline(dir.path());
    let d = dir.path();

    let vocab = Vocabulary::read_tsv(&d.join("vocab.tsv")).unwrap();
    let model = read_model(&d.join("lda.json")).unwrap();
    model.ensure_vocabulary(&vocab).unwrap();
    assert_eq!(model.topics(), 4);
    assert_eq!(model.doc_ids.len(), 40);
    model.check_consistency().unwrap();
    model.check_normalization(1e-9).unwrap();

    let labels = read_labels(&d.join("labels.jsonl")).unwrap();
    assert_eq!(labels.len(), 40);
    assert!(labels.values().all(|&t| t < 4));

    let head = read_head(&d.join("head.bin")).unwrap();
    assert_eq!((head.topics(), head.dim()), (4, 32));
}

#[test]
fn partition_sizes_equal_prediction_histogram() {
    let dir = tempfile::tempdir().unwrap();
    run_mini_pipeline(dir.path());
    let d = dir.path();
    let head = read_head(&d.join("head.bin")).unwrap();
    let index = read_index(&d.join("index.tidx")).unwrap();
    let elsi = read_embeddings(&fixture("mini_elsi.emb")).unwrap();

    let mut histogram = vec![0usize; head.topics()];
    for (_, row) in elsi.rows() {
        histogram[predict_topic(row, &head).unwrap().topic] += 1;
    }
    let sizes: Vec<usize> = index.partitions().iter().map(|p| p.len()).collect();
    assert_eq!(sizes, histogram);
    assert_eq!(index.total_articles(), 8);
}

#[test]
fn partition_sizes_equal_label_histogram() {
    let dir = tempfile::tempdir().unwrap();
    run_mini_pipeline(dir.path());
    let d = dir.path();
    let out = d.join("by_labels.tidx");
    let summary = pipeline::build_index(
        &fixture("mini_elsi.emb"),
        &d.join("head.bin"),
        Some(&d.join("labels.jsonl")),
        &out,
    )
    .unwrap();
    let labels = read_labels(&d.join("labels.jsonl")).unwrap();
    let elsi = read_embeddings(&fixture("mini_elsi.emb")).unwrap();
    let mut histogram = vec![0usize; 4];
    for id in elsi.ids() {
        histogram[labels[id]] += 1;
    }
    assert_eq!(summary.partition_sizes, histogram);
    assert!(summary.warnings.is_empty());
}

#[test]
fn bridge_batch_fixture_is_a_clean_activated_matrix() {
    let m = read_embeddings(&fixture("bridge_batch_768.emb")).unwrap();
    assert_eq!((m.len(), m.dim()), (10, 768));
    assert!(m.is_activated());
    assert!(m.values().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn corrupted_fixture_copy_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = fs::read(fixture("mini_elsi.emb")).unwrap();
    bytes.truncate(bytes.len() - 3);
    let path = dir.path().join("cut.emb");
    fs::write(&path, &bytes).unwrap();
    let err = read_embeddings(&path).unwrap_err();
    assert!(matches!(err, EmbeddingError::File { .. }), "{err:?}");
    assert!(err.to_string().contains("cut.emb"));
}
