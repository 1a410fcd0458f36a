//! BM25 inverted index with exact top-k scoring.
//!
//! Scores follow the Lucene variant:
//!
//! ```text
//! score(q, d) = sum over t in q of IDF(t) * tf / (tf + k1 * (1 - b + b * dl/avgdl))
//! IDF(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! with defaults `k1 = 0.9`, `b = 0.4`. The `ln(1 + ...)` form keeps IDF
//! non-negative for every `df` in `[1, N]`. Query terms are scored with
//! multiplicity: a term repeated in the query contributes once per
//! occurrence. Search is exhaustive over matching postings, so top-k output
//! equals exhaustive rescoring by definition, with ties broken by ascending
//! doc id.

use std::collections::HashMap;

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};
use crate::run::{rank_top_k, ScoredDoc};

use super::analyzer::AnalyzerConfig;

/// BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::Validation(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Validation(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Immutable inverted index over an analyzed corpus.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    pub(crate) params: Bm25Params,
    pub(crate) analyzer: AnalyzerConfig,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) by_id: HashMap<String, u32>,
    pub(crate) doc_lengths: Vec<u32>,
    pub(crate) avg_doc_length: f64,
    /// term -> postings sorted by internal doc id.
    pub(crate) postings: HashMap<String, Vec<Posting>>,
}

impl Bm25Index {
    /// Indexes a corpus. Documents are analyzed as `title + " " + text`.
    /// A document whose tokens are all filtered out keeps length 0 and
    /// still participates in the average document length.
    pub fn build(corpus: &CorpusStore, analyzer: AnalyzerConfig, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyInput("corpus"));
        }

        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut by_id = HashMap::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();

        for record in corpus.iter() {
            let internal = doc_ids.len() as u32;
            if by_id.insert(record.doc_id.clone(), internal).is_some() {
                return Err(Error::Validation(format!("duplicate doc id {:?}", record.doc_id)));
            }
            doc_ids.push(record.doc_id.clone());

            let field = match &record.title {
                Some(title) => format!("{title} {}", record.text),
                None => record.text.clone(),
            };
            let tokens = analyzer.analyze(&field);
            doc_lengths.push(tokens.len() as u32);

            let mut counts: HashMap<String, u32> = HashMap::new();
            for token in tokens {
                *counts.entry(token).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting { doc: internal, tf });
            }
        }

        for plist in postings.values_mut() {
            plist.sort_by_key(|p| p.doc);
        }

        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;

        Ok(Bm25Index {
            params,
            analyzer,
            doc_ids,
            by_id,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.by_id.get(doc_id).map(|&i| self.doc_lengths[i as usize])
    }

    /// Number of documents containing `term` (as produced by the analyzer).
    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Occurrences of `term` in one document.
    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let Some(&internal) = self.by_id.get(doc_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|plist| {
                plist
                    .binary_search_by_key(&internal, |p| p.doc)
                    .ok()
                    .map(|i| plist[i].tf)
            })
            .unwrap_or(0)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
    }

    fn tf_weight(&self, tf: u32, doc_length: u32) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - self.params.b + self.params.b * doc_length as f64 / self.avg_doc_length;
        tf / (tf + self.params.k1 * norm)
    }

    /// BM25 score of one document for a pre-analyzed query term sequence.
    /// Terms absent from the document contribute 0.
    pub fn score(&self, query_terms: &[String], doc_id: &str) -> Result<f64> {
        let &internal = self
            .by_id
            .get(doc_id)
            .ok_or_else(|| Error::UnknownId(doc_id.to_string()))?;
        let dl = self.doc_lengths[internal as usize];
        let mut score = 0.0;
        for term in query_terms {
            let Some(plist) = self.postings.get(term) else {
                continue;
            };
            let Ok(i) = plist.binary_search_by_key(&internal, |p| p.doc) else {
                continue;
            };
            score += self.idf(plist.len()) * self.tf_weight(plist[i].tf, dl);
        }
        Ok(score)
    }

    /// Exact top-k retrieval for a raw query string. Documents matching no
    /// query term are omitted; fewer than `k` matches return fewer results.
    pub fn search(&self, query_text: &str, k: usize) -> Vec<ScoredDoc> {
        let terms = self.analyzer.analyze(query_text);
        self.search_terms(&terms, k)
    }

    /// Exact top-k retrieval for pre-analyzed query terms.
    pub fn search_terms(&self, query_terms: &[String], k: usize) -> Vec<ScoredDoc> {
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in query_terms {
            let Some(plist) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(plist.len());
            for posting in plist {
                let w = idf * self.tf_weight(posting.tf, self.doc_lengths[posting.doc as usize]);
                *scores.entry(posting.doc).or_insert(0.0) += w;
            }
        }
        let entries: Vec<ScoredDoc> = scores
            .into_iter()
            .map(|(doc, score)| ScoredDoc::new(self.doc_ids[doc as usize].clone(), score))
            .collect();
        rank_top_k(entries, k)
    }
}
