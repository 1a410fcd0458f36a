//! Term-based retrieval: a BM25 inverted index and a SPLADE-style impact
//! index scoring precomputed vocabulary-weight vectors by dot product.

mod analyzer;
mod bm25;
mod impact;
mod storage;

pub use analyzer::AnalyzerConfig;
pub use bm25::{Bm25Index, Bm25Params};
pub use impact::ImpactIndex;
pub use storage::{load_sparse_index, SparseIndexFile};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// A sparse vector over opaque integer term identifiers.
///
/// Entries are kept sorted by term id; weights are non-negative and finite.
/// Term ids come from whatever tokenizer produced the vectors and are never
/// interpreted by this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(u32, f32)>,
}

impl SparseVector {
    /// Builds a vector from (term, weight) pairs. Duplicate terms, negative
    /// weights, and non-finite weights are rejected.
    pub fn new(mut entries: Vec<(u32, f32)>) -> Result<Self> {
        entries.sort_by_key(|(term, _)| *term);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Validation(format!("duplicate term {}", pair[0].0)));
            }
        }
        for &(term, weight) in &entries {
            if !weight.is_finite() {
                return Err(Error::Validation(format!("non-finite weight for term {term}")));
            }
            if weight < 0.0 {
                return Err(Error::Validation(format!(
                    "negative weight {weight} for term {term}"
                )));
            }
        }
        Ok(SparseVector { entries })
    }

    pub fn empty() -> Self {
        SparseVector { entries: Vec::new() }
    }

    /// Entries sorted by ascending term id.
    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn weight(&self, term: u32) -> f32 {
        match self.entries.binary_search_by_key(&term, |(t, _)| *t) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dot product over shared terms, accumulated in f64.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < self.entries.len() && j < other.entries.len() {
            let (ta, wa) = self.entries[i];
            let (tb, wb) = other.entries[j];
            match ta.cmp(&tb) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += wa as f64 * wb as f64;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

#[derive(Deserialize)]
struct RawVectorLine {
    _id: String,
    vector: BTreeMap<String, f32>,
}

/// Loads a sparse-vector JSONL file: one `{"_id", "vector": {term: weight}}`
/// object per line, term ids as decimal strings. Returns vectors in file
/// order.
pub fn load_sparse_vectors(path: impl AsRef<Path>) -> Result<Vec<(String, SparseVector)>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawVectorLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let mut entries = Vec::with_capacity(raw.vector.len());
        for (term, weight) in raw.vector {
            let term: u32 = term
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad term id {term:?}")))?;
            entries.push((term, weight));
        }
        let vector = SparseVector::new(entries).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        out.push((raw._id, vector));
    }
    Ok(out)
}

/// Writes sparse vectors in the JSONL layout read by [`load_sparse_vectors`].
pub fn save_sparse_vectors(path: impl AsRef<Path>, vectors: &[(String, SparseVector)]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path.as_ref())?);
    for (id, vector) in vectors {
        let map: BTreeMap<String, f32> = vector
            .entries()
            .iter()
            .map(|&(t, w)| (t.to_string(), w))
            .collect();
        let line = serde_json::json!({ "_id": id, "vector": map });
        writeln!(file, "{line}")?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_vector_rejects_negative_weight_and_duplicates() {
        assert!(SparseVector::new(vec![(1, -0.1)]).is_err());
        assert!(SparseVector::new(vec![(1, 0.5), (1, 0.2)]).is_err());
        assert!(SparseVector::new(vec![(1, f32::NAN)]).is_err());
    }

    #[test]
    fn dot_product_over_shared_terms() {
        let q = SparseVector::new(vec![(1, 1.0)]).unwrap();
        let d = SparseVector::new(vec![(1, 3.0), (2, 5.0)]).unwrap();
        assert_eq!(q.dot(&d), 3.0);
        let disjoint = SparseVector::new(vec![(7, 2.0)]).unwrap();
        assert_eq!(q.dot(&disjoint), 0.0);
    }

    #[test]
    fn vector_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.jsonl");
        let vectors = vec![
            ("d1".to_string(), SparseVector::new(vec![(3, 0.25), (1, 1.5)]).unwrap()),
            ("d2".to_string(), SparseVector::empty()),
        ];
        save_sparse_vectors(&path, &vectors).unwrap();
        let loaded = load_sparse_vectors(&path).unwrap();
        assert_eq!(loaded, vectors);
    }
}
