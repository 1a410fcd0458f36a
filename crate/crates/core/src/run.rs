//! Ranked retrieval output: per-query document rankings and TREC run files.
//!
//! Every retriever in this crate produces the same carrier: a ranked list of
//! `(doc_id, score)` per query, scores non-increasing, ties broken by
//! ascending document id. That canonical tie-break keeps rankings
//! deterministic across runs and platforms.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A single retrieved document with its retrieval score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        ScoredDoc {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Sorts scored documents into canonical order (descending score, ties by
/// ascending doc id) and truncates to the top `k`.
pub fn rank_top_k(mut entries: Vec<ScoredDoc>, k: usize) -> Vec<ScoredDoc> {
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    entries.truncate(k);
    entries
}

/// Per-query ranked lists for a whole query set.
///
/// Queries are kept in sorted id order so that iteration, serialization, and
/// evaluation are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalRun {
    queries: BTreeMap<String, Vec<ScoredDoc>>,
}

impl RetrievalRun {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a ranked list for one query. The list must already be in
    /// canonical order: non-increasing scores and unique doc ids.
    pub fn insert(&mut self, query_id: impl Into<String>, ranked: Vec<ScoredDoc>) -> Result<()> {
        let query_id = query_id.into();
        let mut seen = std::collections::HashSet::new();
        for pair in ranked.windows(2) {
            if pair[0].score < pair[1].score {
                return Err(Error::Validation(format!(
                    "query {query_id}: scores are not non-increasing"
                )));
            }
        }
        for doc in &ranked {
            if !doc.score.is_finite() {
                return Err(Error::Validation(format!(
                    "query {query_id}: non-finite score for doc {}",
                    doc.doc_id
                )));
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::Validation(format!(
                    "query {query_id}: duplicate doc id {}",
                    doc.doc_id
                )));
            }
        }
        self.queries.insert(query_id, ranked);
        Ok(())
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[ScoredDoc]> {
        self.queries.get(query_id).map(|v| v.as_slice())
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        self.queries.iter().map(|(q, docs)| (q.as_str(), docs.as_slice()))
    }

    /// Number of queries in the run.
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Renders the run in TREC format: `qid Q0 docid rank score tag`.
    ///
    /// Scores use Rust's shortest round-trip float formatting, so a
    /// save/load cycle reproduces the exact same values.
    pub fn to_trec_string(&self, tag: &str) -> String {
        let mut out = String::new();
        for (query_id, docs) in &self.queries {
            for (rank, doc) in docs.iter().enumerate() {
                out.push_str(&format!(
                    "{query_id} Q0 {} {} {} {tag}\n",
                    doc.doc_id,
                    rank + 1,
                    doc.score
                ));
            }
        }
        out
    }

    pub fn save_trec(&self, path: impl AsRef<Path>, tag: &str) -> Result<()> {
        let mut file = BufWriter::new(File::create(path.as_ref())?);
        file.write_all(self.to_trec_string(tag).as_bytes())?;
        file.flush()?;
        Ok(())
    }

    /// Loads a TREC run file. Rankings are re-sorted into canonical order
    /// (descending score, ascending doc id), so third-party runs whose rank
    /// column disagrees with their scores are normalized on load.
    pub fn load_trec(path: impl AsRef<Path>) -> Result<RetrievalRun> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut collected: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 6 whitespace-separated fields, got {}", fields.len()),
                ));
            }
            let score: f64 = fields[4]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad score {:?}", fields[4])))?;
            if !score.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite score"));
            }
            collected
                .entry(fields[0].to_string())
                .or_default()
                .push(ScoredDoc::new(fields[2], score));
        }
        let mut run = RetrievalRun::new();
        for (query_id, docs) in collected {
            let n = docs.len();
            let ranked = rank_top_k(docs, n);
            run.insert(query_id, ranked)?;
        }
        Ok(run)
    }
}
