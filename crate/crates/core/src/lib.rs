//! Topic-conditioned content-based recommender for ELSI (ethical, legal and
//! social implications) literature.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`corpus`] parses article records and tags the ELSI subset with a keyword query.
//! 2. [`text`] tokenizes abstracts into bag-of-words documents.
//! 3. [`lda`] fits a topic model by collapsed Gibbs sampling and labels every
//!    abstract with its highest-scoring topic.
//! 4. [`classifier`] trains a softmax head over document embeddings to predict
//!    those topics; [`embedding`] owns pooling, the tanh activation and the
//!    `EMB1` interchange format.
//! 5. [`recommend`] searches the ELSI embeddings of the predicted topic by exact
//!    L1 distance.
//!
//! [`pipeline`] and [`service`] tie the stages together for the CLI and the
//! HTTP server.

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod embedding;
mod error;
pub mod lda;
pub mod pipeline;
pub mod recommend;
pub mod service;
pub mod text;
mod util;

pub use error::{Error, Result};
