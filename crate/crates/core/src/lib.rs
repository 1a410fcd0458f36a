//! Hybrid sparse-dense retrieval engine and evaluation toolkit.
//!
//! The crate covers the full desk-scale retrieval pipeline:
//!
//! - [`corpus`]: BEIR-style dataset loading (documents, queries, qrels)
//!   and consistency validation.
//! - [`textprep`]: the cleaning pipeline for web-scraped QA pairs
//!   (normalization, anonymization, boilerplate and length filtering).
//! - [`sparse`]: a BM25 inverted index with a pluggable analyzer, and an
//!   impact index scoring precomputed sparse vectors by dot product.
//! - [`dense`]: exact cosine top-k retrieval over stored embeddings.
//! - [`hybrid`]: candidate pooling, per-index feature extraction, and a
//!   from-scratch pairwise LambdaMART rescorer.
//! - [`metrics`]: NDCG@k, MRR@k, Recall@k, Accuracy@1, and per-group
//!   aggregation.
//! - [`losses`]: training-objective kernels (margin MSE, contrastive loss
//!   with in-batch negatives, distillation MSE) with analytic gradients
//!   and a finite-difference checker.
//! - [`run`]: the ranked-list carrier all retrievers share, plus TREC run
//!   file IO.
//!
//! Everything is deterministic: ties break by ascending doc id, stores are
//! immutable after load, and training uses a seeded RNG.

pub mod corpus;
pub mod dense;
pub mod error;
pub mod hybrid;
pub mod losses;
pub mod metrics;
pub mod run;
pub mod sparse;
pub mod textprep;

pub use error::{Error, Result};
pub use run::{RetrievalRun, ScoredDoc};
