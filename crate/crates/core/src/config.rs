//! Pipeline configuration: a TOML or JSON file, then `ELSI_REC_*`
//! environment overrides, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::corpus::{MatchScope, QuerySpec, DEFAULT_ELSI_TERMS};
use crate::lda::LdaConfig;
use crate::text::{load_stopwords, TokenizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub parts_dir: PathBuf,
    pub vocabulary: PathBuf,
    pub model: PathBuf,
    pub labels: PathBuf,
    pub embeddings: PathBuf,
    pub elsi_embeddings: PathBuf,
    pub head: PathBuf,
    pub index: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: "corpus.jsonl".into(),
            parts_dir: "parts".into(),
            vocabulary: "vocab.tsv".into(),
            model: "lda.json".into(),
            labels: "labels.jsonl".into(),
            embeddings: "sb.emb".into(),
            elsi_embeddings: "elsi.emb".into(),
            head: "head.bin".into(),
            index: "index.tidx".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabularyConfig {
    pub min_df: usize,
    pub max_df_fraction: f64,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        Self {
            min_df: 2,
            max_df_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub terms: Vec<String>,
    pub scope: MatchScope,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            terms: DEFAULT_ELSI_TERMS.iter().map(|s| s.to_string()).collect(),
            scope: MatchScope::TitleAndAbstract,
        }
    }
}

impl QueryConfig {
    pub fn to_query(&self) -> Result<QuerySpec> {
        Ok(QuerySpec::parse(&self.terms, self.scope)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSettings {
    pub lowercase: bool,
    pub min_token_len: usize,
    pub max_tokens: usize,
    /// Replaces the built-in English stopword list.
    pub stopwords_file: Option<PathBuf>,
}

impl Default for TokenizerSettings {
    fn default() -> Self {
        let d = TokenizerConfig::default();
        Self {
            lowercase: d.lowercase,
            min_token_len: d.min_token_len,
            max_tokens: d.max_tokens,
            stopwords_file: None,
        }
    }
}

impl TokenizerSettings {
    pub fn to_config(&self, base_dir: &Path) -> Result<TokenizerConfig> {
        let mut config = TokenizerConfig {
            lowercase: self.lowercase,
            min_token_len: self.min_token_len,
            max_tokens: self.max_tokens,
            ..TokenizerConfig::default()
        };
        if let Some(path) = &self.stopwords_file {
            config.stopwords = load_stopwords(&base_dir.join(path))?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub tokenizer: TokenizerSettings,
    pub vocabulary: VocabularyConfig,
    pub lda: LdaConfig,
    pub train: TrainConfig,
    pub elsi_query: QueryConfig,
    pub encoder_bridge_url: Option<String>,
    /// Directory relative paths are resolved against; the config file's own
    /// directory when loaded from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    /// Parses TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config: PipelineConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.lda.validate()?;
        self.train.validate()?;
        self.elsi_query.to_query()?;
        if !(self.vocabulary.max_df_fraction > 0.0 && self.vocabulary.max_df_fraction <= 1.0) {
            return Err(Error::Config("vocabulary.max_df_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Applies `ELSI_REC_*` overrides using `lookup` (normally `std::env::var`).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let p = &mut self.paths;
        let slots: [(&str, &mut PathBuf); 9] = [
            ("ELSI_REC_CORPUS", &mut p.corpus),
            ("ELSI_REC_PARTS_DIR", &mut p.parts_dir),
            ("ELSI_REC_VOCABULARY", &mut p.vocabulary),
            ("ELSI_REC_MODEL", &mut p.model),
            ("ELSI_REC_LABELS", &mut p.labels),
            ("ELSI_REC_EMBEDDINGS", &mut p.embeddings),
            ("ELSI_REC_ELSI_EMBEDDINGS", &mut p.elsi_embeddings),
            ("ELSI_REC_HEAD", &mut p.head),
            ("ELSI_REC_INDEX", &mut p.index),
        ];
        for (key, slot) in slots {
            if let Some(v) = lookup(key).filter(|v| !v.is_empty()) {
                *slot = PathBuf::from(v);
            }
        }
        if let Some(url) = lookup("ELSI_REC_BRIDGE_URL").filter(|v| !v.is_empty()) {
            self.encoder_bridge_url = Some(url);
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn tokenizer_config(&self) -> Result<TokenizerConfig> {
        self.tokenizer.to_config(&self.base_dir)
    }
}
