#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde::Deserialize;

pub const MINI_INPUTS: [&str; 5] = [
    "mini_corpus.jsonl",
    "mini_sb.emb",
    "mini_elsi.emb",
    "mini_queries.emb",
    "mini_pipeline.toml",
];

/// Artifacts the seeded pipeline writes, relative to the work directory.
pub const MINI_ARTIFACTS: [&str; 8] = [
    "parts/manifest.jsonl",
    "parts/sb.jsonl",
    "parts/elsi.jsonl",
    "vocab.tsv",
    "lda.json",
    "labels.jsonl",
    "head.bin",
    "index.tidx",
];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_elsi-rec"));
    for (key, _) in std::env::vars() {
        if key.starts_with("ELSI_REC_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

/// Copies the mini-corpus inputs and config into `dir`.
pub fn stage_mini(dir: &Path) {
    for name in MINI_INPUTS {
        fs::copy(fixture(name), dir.join(name)).unwrap();
    }
}

pub fn run_ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "elsi-rec {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

/// Runs every stage with the mini config in `dir` and returns the
/// `recommend --k 3` output.
pub fn run_mini_pipeline(dir: &Path) -> String {
    stage_mini(dir);
    let cfg = ["--config", "mini_pipeline.toml"];
    for stage in ["ingest", "lda-fit", "label", "train-head", "build-index"] {
        let mut args = vec![stage];
        args.extend(cfg);
        run_ok(dir, &args);
    }
    let mut args = vec!["recommend", "--query-embedding", "mini_queries.emb", "--k", "3"];
    args.extend(cfg);
    run_ok(dir, &args)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Golden {
    pub query_id: String,
    pub topic: usize,
    pub ids: Vec<String>,
}

pub fn golden() -> Vec<Golden> {
    serde_json::from_str(&fs::read_to_string(fixture("mini_golden.json")).unwrap()).unwrap()
}

/// Parses `recommend` output lines into (query, topic, ids).
pub fn parse_recommend(stdout: &str) -> Vec<Golden> {
    stdout
        .lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            Golden {
                query_id: v["query_id"].as_str().unwrap().to_string(),
                topic: v["topic"].as_u64().unwrap() as usize,
                ids: v["results"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|r| r["id"].as_str().unwrap().to_string())
                    .collect(),
            }
        })
        .collect()
}

/// Recomputes every query's answer from the artifacts by exhaustive scan:
/// argmax of W·x + b, then a (distance, id) sort over that topic's articles.
pub fn brute_force(dir: &Path, k: usize) -> Vec<Golden> {
    use elsi_rec::embedding::read_embeddings;
    let head = elsi_rec::classifier::read_head(&dir.join("head.bin")).unwrap();
    let index = elsi_rec::recommend::read_index(&dir.join("index.tidx")).unwrap();
    let queries = read_embeddings(&dir.join("mini_queries.emb")).unwrap().into_activated();
    queries
        .rows()
        .map(|(qid, x)| {
            let mut best = (0, f64::NEG_INFINITY);
            for t in 0..head.topics() {
                let row = &head.weights()[t * head.dim()..(t + 1) * head.dim()];
                let logit: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + head.bias()[t];
                if logit > best.1 {
                    best = (t, logit);
                }
            }
            let mut scored: Vec<(f64, String)> = index
                .partition(best.0)
                .unwrap()
                .rows()
                .map(|(id, y)| (x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(), id.to_string()))
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            Golden {
                query_id: qid.to_string(),
                topic: best.0,
                ids: scored.into_iter().take(k).map(|(_, id)| id).collect(),
            }
        })
        .collect()
}
