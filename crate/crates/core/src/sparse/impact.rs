//! Impact index: inverted postings over precomputed per-term weights.
//!
//! Stores SPLADE-style document vectors term-by-term and scores a query
//! vector by the sparse dot product over shared terms. Scoring is exact;
//! documents sharing no term with the query never enter the result list.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::run::{rank_top_k, ScoredDoc};

use super::SparseVector;

/// Immutable term -> (doc, weight) index over sparse document vectors.
#[derive(Debug, Clone)]
pub struct ImpactIndex {
    pub(crate) doc_ids: Vec<String>,
    pub(crate) by_id: HashMap<String, u32>,
    /// term -> postings sorted by internal doc id.
    pub(crate) postings: HashMap<u32, Vec<(u32, f32)>>,
}

impl ImpactIndex {
    /// Builds the index from `(doc_id, vector)` pairs in input order.
    /// Weight validity (non-negative, finite, no duplicate terms) is
    /// guaranteed by [`SparseVector`]; duplicate doc ids are rejected here.
    pub fn build(doc_vectors: &[(String, SparseVector)]) -> Result<Self> {
        let mut doc_ids = Vec::with_capacity(doc_vectors.len());
        let mut by_id = HashMap::with_capacity(doc_vectors.len());
        let mut postings: HashMap<u32, Vec<(u32, f32)>> = HashMap::new();

        for (doc_id, vector) in doc_vectors {
            let internal = doc_ids.len() as u32;
            if by_id.insert(doc_id.clone(), internal).is_some() {
                return Err(Error::Validation(format!("duplicate doc id {doc_id:?}")));
            }
            doc_ids.push(doc_id.clone());
            for &(term, weight) in vector.entries() {
                postings.entry(term).or_default().push((internal, weight));
            }
        }
        // input order is ascending internal id already; keep it explicit
        for plist in postings.values_mut() {
            plist.sort_by_key(|&(doc, _)| doc);
        }
        Ok(ImpactIndex { doc_ids, by_id, postings })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    /// Reconstructs the stored vector of one document.
    pub fn doc_vector(&self, doc_id: &str) -> Option<SparseVector> {
        let &internal = self.by_id.get(doc_id)?;
        let mut entries = Vec::new();
        for (&term, plist) in &self.postings {
            if let Ok(i) = plist.binary_search_by_key(&internal, |&(doc, _)| doc) {
                entries.push((term, plist[i].1));
            }
        }
        Some(SparseVector::new(entries).expect("stored entries are valid"))
    }

    /// Exact top-k by dot product between the query vector and each stored
    /// document vector. Zero-weight query terms are skipped.
    pub fn search(&self, query: &SparseVector, k: usize) -> Vec<ScoredDoc> {
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for &(term, qweight) in query.entries() {
            if qweight == 0.0 {
                continue;
            }
            let Some(plist) = self.postings.get(&term) else {
                continue;
            };
            for &(doc, dweight) in plist {
                *scores.entry(doc).or_insert(0.0) += qweight as f64 * dweight as f64;
            }
        }
        let entries: Vec<ScoredDoc> = scores
            .into_iter()
            .map(|(doc, score)| ScoredDoc::new(self.doc_ids[doc as usize].clone(), score))
            .collect();
        rank_top_k(entries, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec_of(entries: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn single_doc_single_posting() {
        let index = ImpactIndex::build(&[("d1".into(), vec_of(&[(1, 2.0)]))]).unwrap();
        assert_eq!(index.doc_count(), 1);
        assert_eq!(index.doc_vector("d1").unwrap(), vec_of(&[(1, 2.0)]));
    }

    #[test]
    fn negative_weight_is_rejected_at_vector_construction() {
        assert!(SparseVector::new(vec![(1, -0.1)]).is_err());
    }

    #[test]
    fn duplicate_doc_id_is_rejected() {
        let docs = vec![
            ("d1".to_string(), vec_of(&[(1, 1.0)])),
            ("d1".to_string(), vec_of(&[(2, 1.0)])),
        ];
        assert!(ImpactIndex::build(&docs).is_err());
    }

    #[test]
    fn dot_product_scoring_and_disjoint_omission() {
        let index = ImpactIndex::build(&[
            ("d1".into(), vec_of(&[(1, 3.0), (2, 5.0)])),
            ("d2".into(), vec_of(&[(9, 4.0)])),
        ])
        .unwrap();
        let results = index.search(&vec_of(&[(1, 1.0)]), 10);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].doc_id, "d1");
        assert_eq!(results[0].score, 3.0);
    }

    fn sparse_vec_strategy() -> impl Strategy<Value = SparseVector> {
        prop::collection::btree_map(0u32..12, 0.0f32..4.0, 0..6)
            .prop_map(|m| SparseVector::new(m.into_iter().collect()).unwrap())
    }

    proptest! {
        #[test]
        fn round_trip_reconstructs_input_vectors(vectors in prop::collection::vec(sparse_vec_strategy(), 1..8)) {
            let docs: Vec<(String, SparseVector)> = vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("d{i}"), v))
                .collect();
            let index = ImpactIndex::build(&docs).unwrap();
            for (id, original) in &docs {
                prop_assert_eq!(&index.doc_vector(id).unwrap(), original);
            }
        }

        #[test]
        fn search_agrees_with_densified_dot_product_oracle(
            vectors in prop::collection::vec(sparse_vec_strategy(), 1..8),
            query in sparse_vec_strategy(),
        ) {
            let docs: Vec<(String, SparseVector)> = vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("d{i}"), v))
                .collect();
            let index = ImpactIndex::build(&docs).unwrap();
            let results = index.search(&query, docs.len());

            // densify to fixed-width arrays and take the plain dot product
            let densify = |v: &SparseVector| {
                let mut dense = [0.0f64; 12];
                for &(t, w) in v.entries() {
                    dense[t as usize] = w as f64;
                }
                dense
            };
            let dq = densify(&query);
            for result in &results {
                let dd = densify(&index.doc_vector(&result.doc_id).unwrap());
                let expected: f64 = dq.iter().zip(dd.iter()).map(|(a, b)| a * b).sum();
                prop_assert!((result.score - expected).abs() < 1e-9);
            }
        }

        #[test]
        fn scores_are_bilinear_in_the_query(
            vectors in prop::collection::vec(sparse_vec_strategy(), 1..8),
            query in sparse_vec_strategy(),
        ) {
            // power-of-two scale keeps f32 multiplication exact
            let scale = 4.0f32;
            let docs: Vec<(String, SparseVector)> = vectors
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("d{i}"), v))
                .collect();
            let index = ImpactIndex::build(&docs).unwrap();

            let scaled = SparseVector::new(
                query.entries().iter().map(|&(t, w)| (t, w * scale)).collect(),
            )
            .unwrap();
            let base = index.search(&query, docs.len());
            let scaled_run = index.search(&scaled, docs.len());

            prop_assert_eq!(base.len(), scaled_run.len());
            for (a, b) in base.iter().zip(&scaled_run) {
                prop_assert_eq!(&a.doc_id, &b.doc_id);
                prop_assert!((b.score - a.score * scale as f64).abs() <= 1e-12 * b.score.abs().max(1.0));
            }
        }
    }
}
