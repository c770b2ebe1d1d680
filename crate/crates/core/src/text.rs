//! Tokenization, vocabulary construction and bag-of-words vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sha256_hex;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("cannot build a vocabulary from zero documents")]
    NoDocuments,
    #[error("vocabulary is empty after document-frequency filtering (min_df={min_df}, max_df_fraction={max_df_fraction})")]
    EmptyVocabulary { min_df: usize, max_df_fraction: f64 },
    #[error("invalid tokenizer or vocabulary setting: {0}")]
    InvalidConfig(String),
    #[error("document `{doc_id}` has no in-vocabulary tokens")]
    EmptyDocument { doc_id: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("vocabulary file {path}, line {line}: {reason}")]
    BadVocabularyFile { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_len: usize,
    pub stopwords: BTreeSet<String>,
    pub max_tokens: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            min_token_len: 2,
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            max_tokens: 512,
        }
    }
}

impl TokenizerConfig {
    pub fn with_stopwords(mut self, stopwords: BTreeSet<String>) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn validate(&self) -> Result<(), TextError> {
        if self.max_tokens == 0 {
            return Err(TextError::InvalidConfig("max_tokens must be at least 1".into()));
        }
        if self.min_token_len == 0 {
            return Err(TextError::InvalidConfig("min_token_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// One token per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>, TextError> {
    let text = fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_stopwords(&text))
}

/// Splits on non-alphanumeric boundaries, filters short tokens and stopwords,
/// then keeps the first `max_tokens` survivors.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if config.lowercase { t.to_lowercase() } else { t.to_string() })
        .filter(|t| t.chars().count() >= config.min_token_len && !config.stopwords.contains(t))
        .take(config.max_tokens)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_frequency: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from `(token, doc_frequency)` pairs, assigning
    /// indices in lexicographic token order.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, usize)>) -> Result<Self, TextError> {
        let sorted: BTreeMap<String, usize> = entries.into_iter().collect();
        if sorted.is_empty() {
            return Err(TextError::InvalidConfig("vocabulary has no entries".into()));
        }
        let (tokens, doc_frequency): (Vec<_>, Vec<_>) = sorted.into_iter().unzip();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            tokens,
            doc_frequency,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_frequency(&self, index: usize) -> Option<usize> {
        self.doc_frequency.get(index).copied()
    }

    /// `index<TAB>token<TAB>doc_frequency`, one line per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (tok, df)) in self.tokens.iter().zip(&self.doc_frequency).enumerate() {
            writeln!(out, "{i}\t{tok}\t{df}").unwrap();
        }
        out
    }

    /// SHA-256 of the TSV dump; used to tie a fitted model to its vocabulary.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_tsv().as_bytes())
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), TextError> {
        fs::write(path, self.to_tsv()).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_tsv(path: &Path) -> Result<Self, TextError> {
        let text = fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_tsv(&text).map_err(|(line, reason)| TextError::BadVocabularyFile {
            path: path.to_path_buf(),
            line,
            reason,
        })
    }

    fn parse_tsv(text: &str) -> Result<Self, (usize, String)> {
        let mut entries: Vec<(String, usize)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err((line_no, format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let index: usize = fields[0].parse().map_err(|_| (line_no, "bad index".to_string()))?;
            if index != entries.len() {
                return Err((line_no, format!("expected index {}, found {index}", entries.len())));
            }
            let df: usize = fields[2].parse().map_err(|_| (line_no, "bad doc_frequency".to_string()))?;
            if let Some((prev, _)) = entries.last() {
                if fields[1] <= prev.as_str() {
                    return Err((line_no, "tokens must be unique and sorted".to_string()));
                }
            }
            entries.push((fields[1].to_string(), df));
        }
        if entries.is_empty() {
            return Err((0, "empty vocabulary".into()));
        }
        Vocabulary::from_entries(entries).map_err(|e| (0, e.to_string()))
    }
}

/// Keeps tokens with `min_df <= df <= max_df_fraction * |docs|`.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    min_df: usize,
    max_df_fraction: f64,
) -> Result<Vocabulary, TextError> {
    if docs.is_empty() {
        return Err(TextError::NoDocuments);
    }
    if !(max_df_fraction > 0.0 && max_df_fraction <= 1.0) {
        return Err(TextError::InvalidConfig(format!(
            "max_df_fraction must lie in (0, 1], got {max_df_fraction}"
        )));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for tok in unique {
            *df.entry(tok).or_default() += 1;
        }
    }
    let max_df = max_df_fraction * docs.len() as f64;
    let kept: Vec<(String, usize)> = df
        .into_iter()
        .filter(|&(_, n)| n >= min_df && n as f64 <= max_df)
        .map(|(t, n)| (t.to_string(), n))
        .collect();
    if kept.is_empty() {
        return Err(TextError::EmptyVocabulary {
            min_df,
            max_df_fraction,
        });
    }
    Vocabulary::from_entries(kept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowDocument {
    pub doc_id: String,
    /// Token index to positive count.
    pub counts: BTreeMap<usize, u32>,
}

impl BowDocument {
    pub fn total(&self) -> usize {
        self.counts.values().map(|&c| c as usize).sum()
    }

    /// Token indices in ascending index order, each repeated by its count.
    pub fn expand(&self) -> Vec<usize> {
        self.counts
            .iter()
            .flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
            .collect()
    }
}

/// Counts in-vocabulary tokens; out-of-vocabulary tokens are dropped.
pub fn vectorize<S: AsRef<str>>(doc_id: &str, tokens: &[S], vocab: &Vocabulary) -> Result<BowDocument, TextError> {
    let mut counts = BTreeMap::new();
    for tok in tokens {
        if let Some(i) = vocab.index_of(tok.as_ref()) {
            *counts.entry(i).or_insert(0u32) += 1;
        }
    }
    if counts.is_empty() {
        return Err(TextError::EmptyDocument {
            doc_id: doc_id.to_string(),
        });
    }
    Ok(BowDocument {
        doc_id: doc_id.to_string(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_stop() -> TokenizerConfig {
        TokenizerConfig::default().with_stopwords(BTreeSet::new())
    }

    #[test]
    fn tokenize_example() {
        assert_eq!(
            tokenize("Synthetic Biology, re-design!", &no_stop()),
            vec!["synthetic", "biology", "re", "design"]
        );
        assert!(tokenize("", &no_stop()).is_empty());
    }

    #[test]
    fn tokenize_filters() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("The cell and a DNA x", &cfg), vec!["cell", "dna"]);
        let keep_case = TokenizerConfig {
            lowercase: false,
            ..no_stop()
        };
        assert_eq!(tokenize("DNA Cell", &keep_case), vec!["DNA", "Cell"]);
    }

    #[test]
    fn truncates_to_max_tokens() {
        let text: Vec<String> = (0..600).map(|i| format!("w{i}")).collect();
        let toks = tokenize(&text.join(" "), &no_stop());
        assert_eq!(toks.len(), 512);
        assert_eq!(toks[0], "w0");
        assert_eq!(toks[511], "w511");
    }

    #[test]
    fn truncation_counts_surviving_tokens() {
        let cfg = TokenizerConfig {
            max_tokens: 3,
            ..TokenizerConfig::default()
        };
        assert_eq!(tokenize("the a cell of dna and rna protein", &cfg), vec!["cell", "dna", "rna"]);
    }

    #[test]
    fn vocabulary_df_bounds() {
        let docs = vec![vec!["cell", "dna"], vec!["cell"], vec!["cell", "rna"]];
        let v = build_vocabulary(&docs, 1, 1.0).unwrap();
        assert!(v.index_of("cell").is_some());
        let v = build_vocabulary(&docs, 1, 0.5).unwrap();
        assert!(v.index_of("cell").is_none());
        assert_eq!(v.tokens(), ["dna", "rna"]);
        let docs2 = vec![vec!["cell", "dna"], vec!["cell"]];
        let v = build_vocabulary(&docs2, 2, 1.0).unwrap();
        assert_eq!(v.tokens(), ["cell"]);
        assert_eq!(v.doc_frequency(0), Some(2));
    }

    #[test]
    fn vocabulary_errors() {
        let empty: Vec<Vec<&str>> = vec![];
        assert!(matches!(build_vocabulary(&empty, 1, 1.0), Err(TextError::NoDocuments)));
        assert!(matches!(
            build_vocabulary(&[vec!["a"]], 2, 1.0),
            Err(TextError::EmptyVocabulary { .. })
        ));
        assert!(build_vocabulary(&[vec!["a"]], 1, 0.0).is_err());
    }

    #[test]
    fn vectorize_counts() {
        let v = build_vocabulary(&[vec!["cell", "dna"]], 1, 1.0).unwrap();
        let bow = vectorize("d", &["cell", "cell", "dna", "zzz"], &v).unwrap();
        let cell = v.index_of("cell").unwrap();
        let dna = v.index_of("dna").unwrap();
        assert_eq!(bow.counts, BTreeMap::from([(cell, 2), (dna, 1)]));
        assert_eq!(bow.expand(), vec![cell, cell, dna]);
        assert!(matches!(
            vectorize("e", &["zzz"], &v),
            Err(TextError::EmptyDocument { doc_id }) if doc_id == "e"
        ));
    }

    #[test]
    fn tsv_round_trip_and_validation() {
        let v = build_vocabulary(&[vec!["b", "a"], vec!["a", "c"]], 1, 1.0).unwrap();
        assert_eq!(v.to_tsv(), "0\ta\t2\n1\tb\t1\n2\tc\t1\n");
        assert_eq!(Vocabulary::parse_tsv(&v.to_tsv()).unwrap(), v);
        assert!(Vocabulary::parse_tsv("0\tb\t1\n1\ta\t1\n").is_err());
        assert!(Vocabulary::parse_tsv("1\ta\t1\n").is_err());
        assert!(Vocabulary::parse_tsv("0\ta\n").is_err());
    }

    proptest! {
        #[test]
        fn tokenize_is_deterministic_and_bounded(text in "\\PC{0,400}", max in 1usize..50) {
            let cfg = TokenizerConfig { max_tokens: max, ..TokenizerConfig::default() };
            let a = tokenize(&text, &cfg);
            prop_assert_eq!(&a, &tokenize(&text, &cfg));
            prop_assert!(a.len() <= max);
        }

        #[test]
        fn vocabulary_indices_are_dense_and_sorted(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]{1,3}", 1..10), 1..8)
        ) {
            let v = build_vocabulary(&docs, 1, 1.0).unwrap();
            for (i, tok) in v.tokens().iter().enumerate() {
                prop_assert_eq!(v.index_of(tok), Some(i));
            }
            prop_assert!(v.tokens().windows(2).all(|w| w[0] < w[1]));
            let shuffled: Vec<_> = docs.iter().rev().cloned().collect();
            prop_assert_eq!(build_vocabulary(&shuffled, 1, 1.0).unwrap(), v);
        }

        #[test]
        fn bow_total_bounded_by_max_tokens(text in "[a-z ]{0,300}", max in 1usize..40) {
            let cfg = TokenizerConfig { max_tokens: max, ..TokenizerConfig::default() };
            let toks = tokenize(&text, &cfg);
            if let Ok(v) = build_vocabulary(std::slice::from_ref(&toks), 1, 1.0) {
                let bow = vectorize("d", &toks, &v).unwrap();
                prop_assert!(bow.total() <= max);
            }
        }
    }
}
