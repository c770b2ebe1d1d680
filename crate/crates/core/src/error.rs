use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::corpus::CorpusError;
use crate::embedding::EmbeddingError;
use crate::lda::LdaError;
use crate::recommend::RecommendError;
use crate::text::TextError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
