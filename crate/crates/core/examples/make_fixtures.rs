//! Regenerates the embedding fixtures under `fixtures/` with a deterministic
//! hashing bag-of-words encoder (signed feature hashing, then tanh).
//!
//! ```text
//! cargo run -p elsi-rec --example make_fixtures
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use sha2::{Digest, Sha256};

use elsi_rec::corpus::{parse_corpus, CorpusFormat, QuerySpec};
use elsi_rec::embedding::{write_embeddings, EmbeddingMatrix};
use elsi_rec::text::{tokenize, TokenizerConfig};

const DIM: usize = 32;
const ENCODER: &str = "hashing-bow-32";

const QUERIES: [(&str, &str); 3] = [
    (
        "q1",
        "A repressor based genetic switch with bistable expression and tunable promoter response in engineered cells.",
    ),
    (
        "q2",
        "Pathway enzyme balancing raises product titer and yield of a metabolic fermentation process.",
    ),
    (
        "q3",
        "A paper based cell free sensor gives colorimetric detection output for viral RNA in the field.",
    ),
];

fn hash_encode(text: &str, tokenizer: &TokenizerConfig) -> Vec<f64> {
    let tokens = tokenize(text, tokenizer);
    let mut v = vec![0.0; DIM];
    for t in &tokens {
        let h = Sha256::digest(t.as_bytes());
        let bucket = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as usize % DIM;
        let sign = if h[4] & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let scale = (tokens.len().max(1) as f64).sqrt();
    v.iter_mut().for_each(|x| *x /= scale);
    v
}

fn encode_all<'a>(
    items: impl Iterator<Item = (&'a str, String)>,
    tokenizer: &TokenizerConfig,
) -> anyhow::Result<EmbeddingMatrix> {
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (id, text) in items {
        ids.push(id.to_string());
        values.extend(hash_encode(&text, tokenizer));
    }
    Ok(EmbeddingMatrix::new(ids, DIM, values, ENCODER, false)?.into_activated())
}

/// A 10×768 matrix shaped like one encoder-bridge batch.
fn bridge_batch() -> anyhow::Result<EmbeddingMatrix> {
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for i in 0..10 {
        ids.push(format!("bridge{i:02}"));
        for j in 0..768 {
            let h = Sha256::digest(format!("{i}:{j}").as_bytes());
            let u = u32::from_le_bytes([h[0], h[1], h[2], h[3]]) as f64 / u32::MAX as f64;
            values.push(4.0 * u - 2.0);
        }
    }
    Ok(EmbeddingMatrix::new(ids, 768, values, "bridge-sample-768", false)?.into_activated())
}

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = |name: &str| -> PathBuf { dir.join(name) };
    let tokenizer = TokenizerConfig::default();
    let corpus = parse_corpus(&dir.join("mini_corpus.jsonl"), CorpusFormat::Jsonl)
        .context("reading the mini corpus")?;
    let query = QuerySpec::default_elsi();

    let text = |r: &elsi_rec::corpus::ArticleRecord| format!("{} {}", r.title, r.abstract_text);
    let sb = encode_all(corpus.records.iter().map(|r| (r.id.as_str(), text(r))), &tokenizer)?;
    let elsi = encode_all(
        corpus
            .records
            .iter()
            .filter(|r| elsi_rec::corpus::match_query(r, &query))
            .map(|r| (r.id.as_str(), text(r))),
        &tokenizer,
    )?;
    let queries = encode_all(QUERIES.iter().map(|(id, t)| (*id, t.to_string())), &tokenizer)?;

    write(&sb, &out("mini_sb.emb"))?;
    write(&elsi, &out("mini_elsi.emb"))?;
    write(&queries, &out("mini_queries.emb"))?;
    write(&bridge_batch()?, &out("bridge_batch_768.emb"))?;
    Ok(())
}

fn write(m: &EmbeddingMatrix, path: &Path) -> anyhow::Result<()> {
    write_embeddings(m, path).with_context(|| format!("writing {}", path.display()))?;
    println!("{}: N={} D={}", path.display(), m.len(), m.dim());
    Ok(())
}
