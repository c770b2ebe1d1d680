//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.
//!
//! ```text
//! cargo test -p elsi-rec --test acceptance
//! ```

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use elsi_rec::classifier::{self, gradient, mean_cross_entropy, predict_topic, softmax, ClassifierHead, TrainConfig};
use elsi_rec::corpus::{parse_corpus, partition_corpus, ArticleRecord, CorpusFormat, QuerySpec};
use elsi_rec::embedding::{decode_embeddings, read_embeddings, write_embeddings, EmbeddingError, EmbeddingMatrix};
use elsi_rec::lda::{assign_topic, GibbsSampler, LdaConfig};
use elsi_rec::recommend::{l1_distance, recommend, recommend_global, TopicIndex};
use elsi_rec::text::{vectorize, Vocabulary};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---------------------------------------------------------------------------
// Metrics oracle
// ---------------------------------------------------------------------------

struct OracleScores {
    accuracy: f64,
    macro_f1: f64,
    per_class: Vec<(f64, f64, f64)>,
}

/// Precision, recall and F1 straight from a confusion matrix (rows true,
/// columns predicted), 0/0 taken as 0, macro-averaged over every class.
fn oracle_from_confusion(c: &[Vec<usize>]) -> OracleScores {
    let k = c.len();
    let total: usize = c.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| c[i][i]).sum();
    let per_class: Vec<(f64, f64, f64)> = (0..k)
        .map(|i| {
            let tp = c[i][i] as f64;
            let predicted: usize = (0..k).map(|r| c[r][i]).sum();
            let actual: usize = c[i].iter().sum();
            let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        })
        .collect();
    OracleScores {
        accuracy: correct as f64 / total as f64,
        macro_f1: per_class.iter().map(|s| s.2).sum::<f64>() / k as f64,
        per_class,
    }
}

fn metrics_oracle() -> Outcome {
    let report = classifier::evaluate(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 2], 3).map_err(|e| e.to_string())?;
    check!(close(report.accuracy, 0.8, 1e-12), "fixture accuracy {}", report.accuracy);
    let expected_f1 = (2.0 / 3.0 + 0.8 + 1.0) / 3.0;
    check!(close(report.macro_f1, expected_f1, 1e-12), "fixture macro F1 {}", report.macro_f1);
    check!(close(report.macro_f1, 0.822_222_222_222_222, 1e-12), "fixture macro F1 {}", report.macro_f1);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let k = rng.gen_range(2..=7);
        let mut confusion = vec![vec![0usize; k]; k];
        for row in confusion.iter_mut() {
            for cell in row.iter_mut() {
                *cell = if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..15) };
            }
        }
        if confusion.iter().flatten().sum::<usize>() == 0 {
            confusion[0][0] = 1;
        }
        let mut pairs = Vec::new();
        for (t, row) in confusion.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                pairs.extend(std::iter::repeat_n((t, p), n));
            }
        }
        pairs.shuffle(&mut rng);
        let (y_true, y_pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let got = classifier::evaluate(&y_true, &y_pred, k).map_err(|e| e.to_string())?;
        let want = oracle_from_confusion(&confusion);
        check!(got.confusion == confusion, "case {case}: confusion differs");
        check!(close(got.accuracy, want.accuracy, 1e-12), "case {case}: accuracy {} vs {}", got.accuracy, want.accuracy);
        check!(close(got.macro_f1, want.macro_f1, 1e-12), "case {case}: macro F1 {} vs {}", got.macro_f1, want.macro_f1);
        for (c, (g, w)) in got.per_class.iter().zip(&want.per_class).enumerate() {
            check!(
                close(g.precision, w.0, 1e-12) && close(g.recall, w.1, 1e-12) && close(g.f1, w.2, 1e-12),
                "case {case}, class {c}: per-class scores differ"
            );
        }
    }
    Ok(format!("fixture macro F1 {:.12}, 50 random matrices", report.macro_f1))
}

// ---------------------------------------------------------------------------
// LDA planted-topic recovery
// ---------------------------------------------------------------------------

fn lda_planted() -> Outcome {
    let words_per_topic = 50;
    let vocab_tokens: Vec<String> = (0..words_per_topic)
        .map(|i| format!("left{i:02}"))
        .chain((0..words_per_topic).map(|i| format!("right{i:02}")))
        .collect();
    let vocab = Vocabulary::from_entries(vocab_tokens.iter().map(|t| (t.clone(), 1))).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut docs = Vec::new();
    let mut truth = Vec::new();
    for d in 0..200 {
        let topic = d % 2;
        let pool = &vocab_tokens[topic * words_per_topic..(topic + 1) * words_per_topic];
        let tokens: Vec<&String> = (0..40).map(|_| pool.choose(&mut rng).unwrap()).collect();
        let tokens: Vec<&str> = tokens.into_iter().map(String::as_str).collect();
        docs.push(vectorize(&format!("doc{d:03}"), &tokens, &vocab).map_err(|e| e.to_string())?);
        truth.push(topic);
    }

    let config = LdaConfig {
        topics: 2,
        iterations: 1000,
        burn_in: 200,
        seed: 42,
        ..LdaConfig::default()
    };
    let mut sampler = GibbsSampler::new(&docs, &vocab, &config).map_err(|e| e.to_string())?;
    let mut checks = 0;
    while sampler.sweeps_done() < config.iterations {
        sampler.sweep();
        if sampler.sweeps_done() % 10 == 0 {
            let state = sampler.snapshot();
            state
                .check_consistency()
                .map_err(|e| format!("sweep {}: {e}", sampler.sweeps_done()))?;
            state
                .check_normalization(1e-9)
                .map_err(|e| format!("sweep {}: {e}", sampler.sweeps_done()))?;
            checks += 1;
        }
    }
    let model = sampler.finish();
    model.check_consistency()?;
    model.check_normalization(1e-9)?;

    let assigned: Vec<usize> = (0..docs.len()).map(|d| assign_topic(model.theta_row(d))).collect();
    let same = assigned.iter().zip(&truth).filter(|(a, t)| a == t).count();
    let purity = same.max(docs.len() - same) as f64 / docs.len() as f64;
    check!(purity >= 0.95, "purity {purity:.3} < 0.95");
    Ok(format!("purity {purity:.3}, invariants checked at {checks} snapshots"))
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Adds `delta` to parameter `i`, counting weights first and then biases.
fn nudge(head: &mut ClassifierHead, i: usize, delta: f64) {
    let n = head.weights().len();
    if i < n {
        head.weights_mut()[i] += delta;
    } else {
        head.bias_mut()[i - n] += delta;
    }
}

fn gradient_check(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.gen_range(2..=5);
        let d = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=8);
        let weights: Vec<f64> = (0..k * d).map(|_| std.sample(rng)).collect();
        let bias: Vec<f64> = (0..k).map(|_| std.sample(rng)).collect();
        let mut head = ClassifierHead::from_parts(k, d, weights, bias).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();

        let (dw, db) = gradient(&xs, &labels, &head).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = dw.into_iter().chain(db).collect();
        let h = 1e-5;
        let loss = |head: &ClassifierHead| mean_cross_entropy(&xs, &labels, head).unwrap();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..k * d + k {
            nudge(&mut head, i, h);
            let up = loss(&head);
            nudge(&mut head, i, -2.0 * h);
            let down = loss(&head);
            nudge(&mut head, i, h);
            numeric.push((up - down) / (2.0 * h));
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn five_clusters(rng: &mut ChaCha8Rng) -> (EmbeddingMatrix, BTreeMap<String, usize>) {
    let dim = 32;
    let sigma = 0.05;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut labels = BTreeMap::new();
    for class in 0..5 {
        // Centres put 0.5 on every fifth coordinate: pairwise distance ~1.8, i.e. ~36 sigma.
        for i in 0..100 {
            let id = format!("c{class}_{i:03}");
            values.extend((0..dim).map(|j| if j % 5 == class { 0.5 } else { 0.0 } + noise.sample(rng)));
            labels.insert(id.clone(), class);
            ids.push(id);
        }
    }
    (EmbeddingMatrix::new(ids, dim, values, "clusters", false).unwrap(), labels)
}

fn classifier_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let worst = gradient_check(&mut rng)?;
    check!(worst < 1e-5, "gradient relative error {worst:e}");

    let mut worst_softmax: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=20);
        let scale = 10f64.powi(rng.gen_range(-2..=3));
        let logits: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        worst_softmax = worst_softmax.max((softmax(&logits).iter().sum::<f64>() - 1.0).abs());
    }
    check!(worst_softmax <= 1e-12, "softmax sums off by {worst_softmax:e}");

    let (data, labels) = five_clusters(&mut rng);
    let config = TrainConfig {
        learning_rate: 0.1,
        epochs: 500,
        batch_size: 10,
        seed: 42,
        ..TrainConfig::default()
    };
    let (head, _) = classifier::train(&data, &labels, &config).map_err(|e| e.to_string())?;
    let correct = data
        .rows()
        .filter(|(id, x)| predict_topic(x, &head).unwrap().topic == labels[*id])
        .count();
    let accuracy = correct as f64 / data.len() as f64;
    check!(accuracy >= 0.99, "training accuracy {accuracy:.4} < 0.99");

    let (again, _) = classifier::train(&data, &labels, &config).map_err(|e| e.to_string())?;
    let bits = |h: &ClassifierHead| -> Vec<u64> { h.weights().iter().chain(h.bias()).map(|v| v.to_bits()).collect() };
    check!(bits(&head) == bits(&again), "retrain under the same seed is not bit-identical");

    Ok(format!(
        "grad rel err {worst:.1e}, softmax err {worst_softmax:.1e}, cluster accuracy {accuracy:.3}, retrain bit-identical"
    ))
}

// ---------------------------------------------------------------------------
// Recommender exactness
// ---------------------------------------------------------------------------

fn oracle_top(query: &[f64], rows: &[(String, Vec<f64>)], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = rows
        .iter()
        .map(|(id, y)| (id.clone(), query.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn recommender_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (n, dim, topics) = (100, 16, 4);
    let mut rows: Vec<(String, Vec<f64>)> = (0..n)
        .map(|i| (format!("e{i:03}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    // Two exact duplicates so the id tie-break is exercised.
    rows[98].1 = rows[0].1.clone();
    rows[99].1 = rows[1].1.clone();
    let assignment: Vec<usize> = (0..n).map(|i| i % topics).collect();

    let mut partitions = Vec::new();
    for t in 0..topics {
        let (ids, values): (Vec<String>, Vec<Vec<f64>>) = rows
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == t)
            .map(|(r, _)| r.clone())
            .unzip();
        partitions.push(EmbeddingMatrix::new(ids, dim, values.concat(), "random", true).map_err(|e| e.to_string())?);
    }
    let index = TopicIndex::new(partitions).map_err(|e| e.to_string())?;

    for q in 0..50 {
        let query: Vec<f64> = if q < 2 {
            rows[q].1.clone()
        } else {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let topic = q % topics;
        let in_topic: Vec<(String, Vec<f64>)> = rows
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == topic)
            .map(|(r, _)| r.clone())
            .collect();
        let got = recommend(&query, topic, 5, &index).map_err(|e| e.to_string())?;
        let want = oracle_top(&query, &in_topic, 5);
        let got_pairs: Vec<(String, f64)> = got.iter().map(|r| (r.article_id.clone(), r.distance)).collect();
        check!(got_pairs == want, "query {q}, topic {topic}: {got_pairs:?} != {want:?}");

        let got = recommend_global(&query, 5, &index).map_err(|e| e.to_string())?;
        let want = oracle_top(&query, &rows, 5);
        let got_pairs: Vec<(String, f64)> = got.iter().map(|r| (r.article_id.clone(), r.distance)).collect();
        check!(got_pairs == want, "query {q}, global: {got_pairs:?} != {want:?}");
    }

    for i in 0..1000 {
        let point = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let (x, y, z) = (point(&mut rng), point(&mut rng), point(&mut rng));
        let d = |a: &[f64], b: &[f64]| l1_distance(a, b).unwrap();
        check!(d(&x, &x) == 0.0, "triple {i}: d(x,x) != 0");
        check!(d(&x, &y) > 0.0, "triple {i}: d(x,y) not positive for x != y");
        check!(d(&x, &y) == d(&y, &x), "triple {i}: asymmetric");
        check!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12, "triple {i}: triangle inequality");
    }
    Ok("50 queries × (topic, global) top-5 exact; 1000 metric triples".into())
}

// ---------------------------------------------------------------------------
// Interchange round-trip
// ---------------------------------------------------------------------------

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, dim: usize, activated: bool) -> EmbeddingMatrix {
    let ids: Vec<String> = (0..n)
        .map(|i| {
            let tail: String = (0..rng.gen_range(0..12)).map(|_| rng.gen_range('a'..='z')).collect();
            if i % 3 == 0 {
                format!("doc-{i}-ä-{tail}")
            } else {
                format!("{i}{tail}")
            }
        })
        .collect();
    let bound = if activated { 1.0 } else { 5.0 };
    let values = (0..n * dim).map(|_| rng.gen_range(-bound..bound)).collect();
    EmbeddingMatrix::new(ids, dim, values, "random-encoder", activated).unwrap()
}

fn interchange() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(768);
    let shapes = [(10, 768, true), (10, 768, false), (1, 1, true), (7, 5, false), (40, 32, true), (3, 300, false)];
    for (i, &(n, dim, activated)) in shapes.iter().enumerate() {
        let m = random_matrix(&mut rng, n, dim, activated);
        let path = dir.path().join(format!("m{i}.emb"));
        write_embeddings(&m, &path).map_err(|e| e.to_string())?;
        let back = read_embeddings(&path).map_err(|e| e.to_string())?;
        check!(back.ids() == m.ids(), "shape {n}×{dim}: ids differ");
        check!(back.dim() == dim && back.len() == n, "shape {n}×{dim}: shape differs");
        check!(back.is_activated() == activated && back.encoder_name() == m.encoder_name(), "shape {n}×{dim}: header differs");
        let exact = back
            .values()
            .iter()
            .zip(m.values())
            .all(|(b, v)| b.to_bits() == ((*v as f32) as f64).to_bits());
        check!(exact, "shape {n}×{dim}: values are not f32-exact");
    }

    let m = random_matrix(&mut rng, 4, 6, false);
    let good = elsi_rec::embedding::encode_embeddings(&m).map_err(|e| e.to_string())?;
    let header = 4 + 2 + 4 + 4 + 2 + m.encoder_name().len() + 1;

    let mut nan = good.clone();
    let first_value = header + 2 + m.ids()[0].len();
    nan[first_value..first_value + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    let nan_err = decode_embeddings(&nan).unwrap_err();
    check!(matches!(nan_err, EmbeddingError::NonFinite { row: 0, col: 0, .. }), "NaN gave {nan_err:?}");

    let truncated_err = decode_embeddings(&good[..good.len() - 1]).unwrap_err();
    check!(matches!(truncated_err, EmbeddingError::Truncated { .. }), "truncation gave {truncated_err:?}");
    let header_cut = decode_embeddings(&good[..9]).unwrap_err();
    check!(matches!(header_cut, EmbeddingError::Truncated { .. }), "header truncation gave {header_cut:?}");

    let mut magic = good.clone();
    magic[..4].copy_from_slice(b"EMB2");
    let magic_err = decode_embeddings(&magic).unwrap_err();
    check!(matches!(magic_err, EmbeddingError::BadMagic { .. }), "bad magic gave {magic_err:?}");

    let path = dir.path().join("nan.emb");
    fs::write(&path, &nan).map_err(|e| e.to_string())?;
    let file_err = read_embeddings(&path).unwrap_err().to_string();
    check!(file_err.contains("nan.emb") && file_err.contains("non-finite"), "file error lacks context: {file_err}");

    Ok(format!(
        "{} shapes incl. 10×768 exact at f32; NaN/truncation/bad magic rejected",
        shapes.len()
    ))
}

// ---------------------------------------------------------------------------
// End-to-end determinism
// ---------------------------------------------------------------------------

fn end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_a = common::run_mini_pipeline(a.path());
    let out_b = common::run_mini_pipeline(b.path());
    for name in common::MINI_ARTIFACTS {
        let x = fs::read(a.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = fs::read(b.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        check!(x == y, "{name} differs between runs");
    }
    check!(out_a == out_b, "recommendation output differs between runs");
    let got = common::parse_recommend(&out_a);
    check!(got == common::golden(), "output {got:?} differs from the golden file");
    let oracle = common::brute_force(a.path(), 3);
    check!(got == oracle, "output {got:?} differs from the brute-force oracle {oracle:?}");
    Ok(format!(
        "{} artifacts byte-identical; golden (topic, top-3) confirmed for {} queries",
        common::MINI_ARTIFACTS.len(),
        got.len()
    ))
}

// ---------------------------------------------------------------------------
// Corpus partition
// ---------------------------------------------------------------------------

fn corpus_partition() -> Outcome {
    let query = QuerySpec::default_elsi();
    let parsed = parse_corpus(&common::fixture("mini_corpus.jsonl"), CorpusFormat::Jsonl).map_err(|e| e.to_string())?;
    let part = partition_corpus(&parsed.records, &query).map_err(|e| e.to_string())?;
    let elsi: Vec<&str> = part.elsi_set.iter().map(|r| r.id.as_str()).collect();
    let hand_counted = ["mc09", "mc10", "mc19", "mc20", "mc29", "mc30", "mc39", "mc40"];
    check!(elsi == hand_counted, "mini corpus ELSI set {elsi:?}");
    check!(part.sb_set.len() == 40, "mini corpus SB set has {} records", part.sb_set.len());

    let words = [
        "gene", "circuit", "policy", "Ethics", "governance", "biosafety", "social", "impact", "issues",
        "environmental", "bioethicist", "bioethics-based", "ethical", "yeast", "pathway", "", "-", "Policy.",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..200 {
        let records: Vec<ArticleRecord> = (0..rng.gen_range(1..30))
            .map(|i| {
                let text = |rng: &mut ChaCha8Rng, len: usize| -> String {
                    (0..len).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
                };
                let title = text(&mut rng, 3);
                let len = rng.gen_range(0..12);
                let abstract_text = text(&mut rng, len);
                ArticleRecord::new(format!("r{i}"), title, abstract_text)
            })
            .collect();
        let part = partition_corpus(&records, &query).map_err(|e| e.to_string())?;
        let sb: BTreeSet<&str> = part.sb_set.iter().map(|r| r.id.as_str()).collect();
        check!(
            part.elsi_set.iter().all(|r| sb.contains(r.id.as_str())),
            "case {case}: an ELSI record is missing from the SB set"
        );
    }
    Ok("mini corpus ELSI = 8 hand-counted ids; ELSI ⊆ SB on 200 random corpora".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 7] = [
        ("metrics oracle", Duration::from_secs(1), metrics_oracle),
        ("LDA planted-topic recovery", Duration::from_secs(10), lda_planted),
        ("classifier", Duration::from_secs(30), classifier_criterion),
        ("recommender exactness", Duration::from_secs(1), recommender_exactness),
        ("interchange round-trip", Duration::from_secs(10), interchange),
        ("end-to-end determinism", Duration::from_secs(60), end_to_end),
        ("corpus partition", Duration::from_secs(10), corpus_partition),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?})"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
