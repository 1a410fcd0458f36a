//! Lightweight hybrid rescoring: pool candidates from several indexes,
//! describe each candidate by four per-index features, and rescore with a
//! boosted tree ensemble trained to rank.
//!
//! Per member index, a candidate contributes the quadruple
//! `(score, list_max, list_min, present)`: its score in that index's
//! candidate list, the maximum and minimum score of the whole list, and a
//! 0/1 presence flag. A candidate absent from an index gets all four
//! attributes zeroed. Rescoring cost is `O(pool * trees * depth)` per query
//! and never touches document text, which is what makes the hybrid cheap
//! compared to a cross-encoder reranker.

mod storage;
mod train;
mod tree;

pub use storage::{load_model, save_model};
pub use train::{train_lambdamart, train_lambdamart_with_log, QueryGroup};
pub use tree::{Node, RegressionTree, TreeEnsemble};

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::run::{rank_top_k, RetrievalRun, ScoredDoc};

/// Features contributed by each member index.
pub const FEATURES_PER_INDEX: usize = 4;

/// Hyperparameters of the LambdaMART fusion model.
///
/// Defaults mirror the gradient-boosting library setup the rescorer is a
/// reconstruction of: 100 trees of depth 6, row subsampling 0.75 (whole
/// query groups), column subsampling 0.9 per tree, learning rate 0.3,
/// pairwise sigmoid scale 1, L2 leaf regularization 1, minimum child
/// hessian weight 1. `ndcg_truncation = None` means lambdas use the full
/// candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct LtrParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub row_subsample: f64,
    pub col_subsample_per_tree: f64,
    pub sigma: f64,
    pub l2_leaf_reg: f64,
    pub min_child_weight: f64,
    pub ndcg_truncation: Option<usize>,
    pub seed: u64,
}

impl Default for LtrParams {
    fn default() -> Self {
        LtrParams {
            n_trees: 100,
            max_depth: 6,
            learning_rate: 0.3,
            row_subsample: 0.75,
            col_subsample_per_tree: 0.9,
            sigma: 1.0,
            l2_leaf_reg: 1.0,
            min_child_weight: 1.0,
            ndcg_truncation: None,
            seed: 42,
        }
    }
}

impl LtrParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Validation("n_trees must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Validation("max_depth must be >= 1".into()));
        }
        for (name, v) in [("row_subsample", self.row_subsample), ("col_subsample_per_tree", self.col_subsample_per_tree)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Validation(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Validation("learning_rate must be > 0".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Validation("sigma must be > 0".into()));
        }
        if !(self.l2_leaf_reg.is_finite() && self.l2_leaf_reg >= 0.0) {
            return Err(Error::Validation("l2_leaf_reg must be >= 0".into()));
        }
        if !(self.min_child_weight.is_finite() && self.min_child_weight >= 0.0) {
            return Err(Error::Validation("min_child_weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Union of the top `per_index_depth` doc ids from each run, sorted.
pub fn build_candidate_pool(runs: &[&[ScoredDoc]], per_index_depth: usize) -> Vec<String> {
    let mut pool = BTreeSet::new();
    for run in runs {
        for doc in run.iter().take(per_index_depth) {
            pool.insert(doc.doc_id.clone());
        }
    }
    pool.into_iter().collect()
}

/// Per-index score lookup plus list statistics, built once per query.
struct RunView<'a> {
    scores: HashMap<&'a str, f64>,
    max: f64,
    min: f64,
}

impl<'a> RunView<'a> {
    fn new(run: &'a [ScoredDoc]) -> Self {
        let mut scores = HashMap::with_capacity(run.len());
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for doc in run {
            scores.insert(doc.doc_id.as_str(), doc.score);
            max = max.max(doc.score);
            min = min.min(doc.score);
        }
        RunView { scores, max, min }
    }

    fn features_for(&self, candidate: &str, out: &mut Vec<f64>) {
        match self.scores.get(candidate) {
            Some(&score) => out.extend_from_slice(&[score, self.max, self.min, 1.0]),
            None => out.extend_from_slice(&[0.0, 0.0, 0.0, 0.0]),
        }
    }
}

/// Extracts the feature quadruples of one candidate against each run, in
/// run order. `runs` are the per-index candidate lists (already truncated
/// to the pooling depth).
pub fn extract_features(runs: &[&[ScoredDoc]], candidate: &str) -> Vec<f64> {
    let mut out = Vec::with_capacity(runs.len() * FEATURES_PER_INDEX);
    for run in runs {
        RunView::new(run).features_for(candidate, &mut out);
    }
    out
}

fn features_for_pool(runs: &[&[ScoredDoc]], pool: &[String]) -> Vec<Vec<f64>> {
    let views: Vec<RunView> = runs.iter().map(|r| RunView::new(r)).collect();
    pool.iter()
        .map(|candidate| {
            let mut row = Vec::with_capacity(views.len() * FEATURES_PER_INDEX);
            for view in &views {
                view.features_for(candidate, &mut row);
            }
            row
        })
        .collect()
}

/// Rescores the pooled candidates of one query with the ensemble and
/// returns the exact top `k` under the canonical tie-break.
///
/// `runs` must come from the member indexes the ensemble was trained on,
/// in the same order; a count mismatch is rejected.
pub fn fuse(
    runs: &[&[ScoredDoc]],
    ensemble: &TreeEnsemble,
    k: usize,
    per_index_depth: usize,
) -> Result<Vec<ScoredDoc>> {
    if runs.len() * FEATURES_PER_INDEX != ensemble.feature_count() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.feature_count(),
            actual: runs.len() * FEATURES_PER_INDEX,
        });
    }
    let truncated: Vec<&[ScoredDoc]> = runs
        .iter()
        .map(|r| &r[..r.len().min(per_index_depth)])
        .collect();
    let pool = build_candidate_pool(&truncated, per_index_depth);
    let features = features_for_pool(&truncated, &pool);
    let entries: Vec<ScoredDoc> = pool
        .into_iter()
        .zip(&features)
        .map(|(doc_id, row)| ScoredDoc::new(doc_id, ensemble.predict_unchecked(row)))
        .collect();
    Ok(rank_top_k(entries, k))
}

/// Fuses whole runs: for each query appearing in any member run, pools and
/// rescores its candidates. Queries are processed in parallel with
/// deterministic output order.
pub fn fuse_run(
    runs: &[&RetrievalRun],
    ensemble: &TreeEnsemble,
    k: usize,
    per_index_depth: usize,
) -> Result<RetrievalRun> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("fuse_run member runs"));
    }
    let query_ids: BTreeSet<&str> = runs.iter().flat_map(|r| r.query_ids()).collect();
    let fused: Result<Vec<(String, Vec<ScoredDoc>)>> = query_ids
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&query_id| {
            let lists: Vec<&[ScoredDoc]> = runs
                .iter()
                .map(|r| r.ranking(query_id).unwrap_or(&[]))
                .collect();
            Ok((query_id.to_string(), fuse(&lists, ensemble, k, per_index_depth)?))
        })
        .collect();
    let mut out = RetrievalRun::new();
    for (query_id, ranked) in fused? {
        out.insert(query_id, ranked)?;
    }
    Ok(out)
}

/// Builds LambdaMART training groups from member runs and qrels: one group
/// per judged query, one feature row per pooled candidate. Queries without
/// judgments are skipped.
pub fn training_groups_from_runs(
    runs: &[&RetrievalRun],
    qrels: &crate::corpus::QrelSet,
    per_index_depth: usize,
) -> Vec<QueryGroup> {
    let mut groups = Vec::new();
    for (query_id, _) in qrels.iter() {
        let lists: Vec<&[ScoredDoc]> = runs
            .iter()
            .map(|r| {
                let full = r.ranking(query_id).unwrap_or(&[]);
                &full[..full.len().min(per_index_depth)]
            })
            .collect();
        let pool = build_candidate_pool(&lists, per_index_depth);
        if pool.is_empty() {
            continue;
        }
        let features = features_for_pool(&lists, &pool);
        groups.push(QueryGroup {
            query_id: query_id.to_string(),
            doc_ids: pool,
            features,
        });
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn list(entries: &[(&str, f64)]) -> Vec<ScoredDoc> {
        entries.iter().map(|&(id, s)| ScoredDoc::new(id, s)).collect()
    }

    #[test]
    fn pool_unions_and_dedups() {
        let a: Vec<ScoredDoc> = (0..100).map(|i| ScoredDoc::new(format!("d{i:03}"), -(i as f64))).collect();
        let b = a.clone();
        assert_eq!(build_candidate_pool(&[&a, &b], 100).len(), 100);

        let c: Vec<ScoredDoc> = (100..200).map(|i| ScoredDoc::new(format!("d{i:03}"), -(i as f64))).collect();
        assert_eq!(build_candidate_pool(&[&a, &c], 100).len(), 200);

        let empty: Vec<ScoredDoc> = vec![];
        let pool = build_candidate_pool(&[&empty, &a], 100);
        assert_eq!(pool.len(), 100);
    }

    #[test]
    fn pool_respects_depth() {
        let a: Vec<ScoredDoc> = (0..50).map(|i| ScoredDoc::new(format!("d{i:02}"), -(i as f64))).collect();
        assert_eq!(build_candidate_pool(&[&a], 10).len(), 10);
    }

    #[test]
    fn absent_candidate_gets_zero_quadruple() {
        let a = list(&[("x", 5.0), ("y", 3.0)]);
        let b = list(&[("y", 9.0)]);
        let features = extract_features(&[&a, &b], "x");
        assert_eq!(features, vec![5.0, 5.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_doc_run_has_max_equal_min_equal_score() {
        let a = list(&[("only", 7.0)]);
        assert_eq!(extract_features(&[&a], "only"), vec![7.0, 7.0, 7.0, 1.0]);
    }

    #[test]
    fn top_ranked_candidate_score_equals_list_max() {
        let a = list(&[("top", 4.0), ("mid", 2.0), ("low", 1.0)]);
        let features = extract_features(&[&a], "top");
        assert_eq!(features[0], features[1]);
    }

    #[test]
    fn fuse_rejects_member_count_mismatch() {
        let ensemble = TreeEnsemble::from_parts(vec![RegressionTree::leaf(0.0)], 0.3, 8).unwrap();
        let a = list(&[("x", 1.0)]);
        assert!(fuse(&[&a], &ensemble, 10, 100).is_err());
        assert!(fuse(&[&a, &a], &ensemble, 10, 100).is_ok());
    }

    #[test]
    fn fuse_returns_pool_size_when_k_exceeds_it() {
        let ensemble = TreeEnsemble::from_parts(vec![RegressionTree::leaf(1.0)], 0.3, 4).unwrap();
        let a = list(&[("x", 1.0), ("y", 0.5)]);
        let fused = fuse(&[&a], &ensemble, 50, 100).unwrap();
        assert_eq!(fused.len(), 2);
    }

    #[test]
    fn monotone_ensemble_preserves_single_index_ranking() {
        // staircase tree over the score feature: strictly increasing in score
        let tree = RegressionTree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.3, left: 1, right: 2 },
                Node::Leaf { value: 0.0 },
                Node::Split { feature: 0, threshold: 0.7, left: 3, right: 4 },
                Node::Leaf { value: 1.0 },
                Node::Leaf { value: 2.0 },
            ],
        };
        let ensemble = TreeEnsemble::from_parts(vec![tree], 0.3, 4).unwrap();
        let run = list(&[("a", 0.9), ("b", 0.5), ("c", 0.1)]);
        let fused = fuse(&[&run], &ensemble, 3, 100).unwrap();
        let ids: Vec<&str> = fused.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    proptest! {
        #[test]
        fn feature_contract_holds_on_random_runs(
            scores_a in prop::collection::vec(-10.0f64..10.0, 0..12),
            scores_b in prop::collection::vec(-10.0f64..10.0, 0..12),
            candidate in 0usize..24,
        ) {
            let mk = |scores: &[f64], offset: usize| -> Vec<ScoredDoc> {
                let n = scores.len();
                rank_top_k(
                    scores.iter().enumerate().map(|(i, &s)| ScoredDoc::new(format!("d{:02}", offset + i), s)).collect(),
                    n,
                )
            };
            let a = mk(&scores_a, 0);
            let b = mk(&scores_b, 6); // overlapping id ranges
            let candidate = format!("d{candidate:02}");
            let features = extract_features(&[&a, &b], &candidate);
            prop_assert_eq!(features.len(), 8);
            for (run, chunk) in [&a, &b].iter().zip(features.chunks(4)) {
                let (score, max, min, present) = (chunk[0], chunk[1], chunk[2], chunk[3]);
                if present == 0.0 {
                    prop_assert_eq!(chunk, [0.0, 0.0, 0.0, 0.0]);
                    prop_assert!(!run.iter().any(|d| d.doc_id == candidate));
                } else {
                    prop_assert_eq!(present, 1.0);
                    prop_assert!(min <= score && score <= max);
                }
            }
        }
    }
}
