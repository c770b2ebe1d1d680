//! Article records, keyword queries and the SB/ELSI corpus partition.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("unsupported corpus format `{0}` (expected jsonl or csv)")]
    UnsupportedFormat(String),
    #[error("corpus {path} contains no valid records ({skipped} rows skipped)")]
    Empty { path: PathBuf, skipped: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("cannot partition an empty record list")]
    NoRecords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "SB")]
    Sb,
    #[serde(rename = "ELSI")]
    Elsi,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Sb => f.write_str("SB"),
            Tag::Elsi => f.write_str("ELSI"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<Tag>,
}

impl ArticleRecord {
    pub fn new(id: impl Into<String>, title: impl Into<String>, abstract_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            tags: BTreeSet::new(),
        }
    }

    pub fn is_elsi(&self) -> bool {
        self.tags.contains(&Tag::Elsi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(CorpusError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Non-fatal problems found while parsing. Row numbers are 1-based data rows
/// (JSONL line number, or CSV record number not counting the header).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowIssue {
    Malformed { row: usize, reason: String },
    DuplicateId { row: usize, id: String },
    EmptyAbstract { row: usize, id: String },
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowIssue::Malformed { row, reason } => write!(f, "row {row}: malformed ({reason})"),
            RowIssue::DuplicateId { row, id } => {
                write!(f, "row {row}: duplicate id `{id}`, keeping first occurrence")
            }
            RowIssue::EmptyAbstract { row, id } => write!(f, "row {row}: `{id}` has an empty abstract"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub records: Vec<ArticleRecord>,
    pub issues: Vec<RowIssue>,
}

impl ParsedCorpus {
    pub fn skipped_empty(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| matches!(i, RowIssue::EmptyAbstract { .. }))
            .count()
    }

    pub fn duplicates(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| matches!(i, RowIssue::DuplicateId { .. }))
            .count()
    }

    pub fn malformed(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| matches!(i, RowIssue::Malformed { .. }))
            .count()
    }
}

#[derive(Deserialize)]
struct RawRow {
    id: Option<String>,
    #[serde(default)]
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
}

struct Admitter {
    seen: HashSet<String>,
    out: ParsedCorpus,
}

impl Admitter {
    fn new() -> Self {
        Self {
            seen: HashSet::new(),
            out: ParsedCorpus::default(),
        }
    }

    fn admit(&mut self, row: usize, raw: RawRow) {
        let id = match raw.id.map(|s| s.trim().to_string()) {
            Some(id) if !id.is_empty() => id,
            _ => {
                self.out.issues.push(RowIssue::Malformed {
                    row,
                    reason: "missing or empty `id`".into(),
                });
                return;
            }
        };
        if self.seen.contains(&id) {
            self.out.issues.push(RowIssue::DuplicateId { row, id });
            return;
        }
        let abstract_text = raw.abstract_text.unwrap_or_default();
        if abstract_text.trim().is_empty() {
            self.out.issues.push(RowIssue::EmptyAbstract { row, id });
            return;
        }
        self.seen.insert(id.clone());
        self.out
            .records
            .push(ArticleRecord::new(id, raw.title.unwrap_or_default(), abstract_text));
    }

    fn malformed(&mut self, row: usize, reason: String) {
        self.out.issues.push(RowIssue::Malformed { row, reason });
    }
}

/// Parses a corpus file. Only I/O failure and a corpus with zero valid
/// records are fatal; everything else is reported in [`ParsedCorpus::issues`].
pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<ParsedCorpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = parse_reader(file, format).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if parsed.records.is_empty() {
        return Err(CorpusError::Empty {
            path: path.to_path_buf(),
            skipped: parsed.issues.len(),
        });
    }
    Ok(parsed)
}

/// Like [`parse_corpus`] but over any reader and without the empty-corpus check.
pub fn parse_reader<R: Read>(reader: R, format: CorpusFormat) -> io::Result<ParsedCorpus> {
    let mut admitter = Admitter::new();
    match format {
        CorpusFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let row = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<RawRow>(&line) {
                    Ok(raw) => admitter.admit(row, raw),
                    Err(e) => admitter.malformed(row, e.to_string()),
                }
            }
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
            for (i, result) in rdr.deserialize::<RawRow>().enumerate() {
                let row = i + 1;
                match result {
                    Ok(raw) => admitter.admit(row, raw),
                    Err(e) if e.is_io_error() => return Err(e.into()),
                    Err(e) => admitter.malformed(row, e.to_string()),
                }
            }
        }
    }
    Ok(admitter.out)
}

/// Writes records as JSONL (`id`, `title`, `abstract`, and `tags` when present).
pub fn write_records_jsonl<W: Write>(mut writer: W, records: &[ArticleRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Which record fields a query is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScope {
    #[default]
    TitleAndAbstract,
    AbstractOnly,
    TitleOnly,
}

/// A lowercase token sequence; when `wildcard` is set the last token is a
/// prefix stem (`bioethics*`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermPattern {
    tokens: Vec<String>,
    wildcard: bool,
}

impl TermPattern {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_wildcard(&self) -> bool {
        self.wildcard
    }

    fn matches_at(&self, text: &[String], start: usize) -> bool {
        let n = self.tokens.len();
        if start + n > text.len() {
            return false;
        }
        self.tokens.iter().enumerate().all(|(j, pat)| {
            let tok = &text[start + j];
            if self.wildcard && j == n - 1 {
                tok.starts_with(pat.as_str())
            } else {
                tok == pat
            }
        })
    }

    fn matches(&self, text: &[String]) -> bool {
        (0..text.len()).any(|start| self.matches_at(text, start))
    }
}

impl FromStr for TermPattern {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let raw: Vec<&str> = s.split_whitespace().collect();
        if raw.is_empty() {
            return Err(CorpusError::InvalidQuery("empty pattern".into()));
        }
        let last = raw.len() - 1;
        let mut tokens = Vec::with_capacity(raw.len());
        let mut wildcard = false;
        for (i, part) in raw.iter().enumerate() {
            let mut part = part.to_lowercase();
            if let Some(pos) = part.find('*') {
                if i != last || pos != part.len() - 1 {
                    return Err(CorpusError::InvalidQuery(format!(
                        "wildcard must be the final character of `{s}`"
                    )));
                }
                part.pop();
                wildcard = true;
            }
            if part.is_empty() || !part.chars().all(char::is_alphanumeric) {
                return Err(CorpusError::InvalidQuery(format!(
                    "pattern `{s}` must consist of alphanumeric tokens"
                )));
            }
            tokens.push(part);
        }
        Ok(TermPattern { tokens, wildcard })
    }
}

impl fmt::Display for TermPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))?;
        if self.wildcard {
            f.write_str("*")?;
        }
        Ok(())
    }
}

pub const DEFAULT_ELSI_TERMS: [&str; 10] = [
    "ethical",
    "ethics",
    "bioethics*",
    "policy",
    "governance",
    "biosafety",
    "social issues",
    "social impact",
    "environmental impact",
    "environmental issues",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySpec {
    terms: Vec<TermPattern>,
    pub scope: MatchScope,
}

impl QuerySpec {
    pub fn new(terms: Vec<TermPattern>, scope: MatchScope) -> Result<Self, CorpusError> {
        if terms.is_empty() {
            return Err(CorpusError::InvalidQuery("a query needs at least one term".into()));
        }
        Ok(Self { terms, scope })
    }

    pub fn parse<S: AsRef<str>>(terms: &[S], scope: MatchScope) -> Result<Self, CorpusError> {
        let terms = terms
            .iter()
            .map(|t| t.as_ref().parse())
            .collect::<Result<Vec<TermPattern>, _>>()?;
        Self::new(terms, scope)
    }

    /// The ten ELSI filter terms, matched over title and abstract.
    pub fn default_elsi() -> Self {
        Self::parse(&DEFAULT_ELSI_TERMS, MatchScope::TitleAndAbstract).expect("default terms are valid")
    }

    pub fn terms(&self) -> &[TermPattern] {
        &self.terms
    }
}

fn match_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn match_query(record: &ArticleRecord, query: &QuerySpec) -> bool {
    let text = match query.scope {
        MatchScope::TitleAndAbstract => format!("{} {}", record.title, record.abstract_text),
        MatchScope::AbstractOnly => record.abstract_text.clone(),
        MatchScope::TitleOnly => record.title.clone(),
    };
    let tokens = match_tokens(&text);
    query.terms.iter().any(|t| t.matches(&tokens))
}

#[derive(Debug, Clone)]
pub struct Partition {
    pub sb_set: Vec<ArticleRecord>,
    pub elsi_set: Vec<ArticleRecord>,
    pub warnings: Vec<String>,
}

/// Tags every record SB and the query matches additionally ELSI. The input
/// is taken to be already filtered down to synthetic biology.
pub fn partition_corpus(records: &[ArticleRecord], elsi_query: &QuerySpec) -> Result<Partition, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::NoRecords);
    }
    let mut sb_set = Vec::with_capacity(records.len());
    let mut elsi_set = Vec::new();
    for record in records {
        let mut tagged = record.clone();
        tagged.tags.insert(Tag::Sb);
        if match_query(record, elsi_query) {
            tagged.tags.insert(Tag::Elsi);
            elsi_set.push(tagged.clone());
        }
        sb_set.push(tagged);
    }
    let mut warnings = Vec::new();
    if elsi_set.is_empty() {
        warnings.push("no records matched the ELSI query; recommendation will be impossible".to_string());
    }
    Ok(Partition {
        sb_set,
        elsi_set,
        warnings,
    })
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    id: &'a str,
    tags: &'a BTreeSet<Tag>,
}

/// Partition manifest: one `{"id":…,"tags":[…]}` line per SB record.
pub fn write_manifest<W: Write>(mut writer: W, partition: &Partition) -> io::Result<()> {
    for record in &partition.sb_set {
        serde_json::to_writer(
            &mut writer,
            &ManifestLine {
                id: &record.id,
                tags: &record.tags,
            },
        )?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
