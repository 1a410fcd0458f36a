//! Ranking quality metrics and per-group aggregation.
//!
//! Conventions match the trec_eval lineage used by BEIR-style harnesses:
//! NDCG uses linear gain with a `log2(rank + 1)` discount and an ideal DCG
//! computed from all judged grades sorted descending. Queries judged but
//! without any relevant document contribute 0 to NDCG/MRR/Accuracy means
//! and are excluded from the Recall mean (where the metric is undefined).
//! Evaluation iterates the queries present in the qrels; a judged query
//! missing from the run scores 0 across the board.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::corpus::QrelSet;
use crate::error::{Error, Result};
use crate::run::{RetrievalRun, ScoredDoc};

/// Judgments for a single query: doc id -> grade.
pub type QueryJudgments = BTreeMap<String, u32>;

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Normalized discounted cumulative gain over the top `k`.
pub fn ndcg_at_k(ranked: &[ScoredDoc], judgments: &QueryJudgments, k: usize) -> f64 {
    let mut ideal_grades: Vec<u32> = judgments.values().copied().filter(|&g| g > 0).collect();
    if ideal_grades.is_empty() {
        return 0.0;
    }
    ideal_grades.sort_unstable_by(|a, b| b.cmp(a));

    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, doc)| {
            let grade = judgments.get(&doc.doc_id).copied().unwrap_or(0);
            grade as f64 * discount(i + 1)
        })
        .sum();
    let idcg: f64 = ideal_grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| g as f64 * discount(i + 1))
        .sum();
    dcg / idcg
}

/// Reciprocal rank of the first relevant document within the top `k`, or 0.
pub fn mrr_at_k(ranked: &[ScoredDoc], judgments: &QueryJudgments, k: usize) -> f64 {
    for (i, doc) in ranked.iter().take(k).enumerate() {
        if judgments.get(&doc.doc_id).copied().unwrap_or(0) > 0 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

/// Fraction of relevant documents retrieved in the top `k`. `None` when the
/// query has no relevant documents (the metric is undefined there and such
/// queries are excluded from dataset means).
pub fn recall_at_k(ranked: &[ScoredDoc], judgments: &QueryJudgments, k: usize) -> Option<f64> {
    let relevant: HashSet<&str> = judgments
        .iter()
        .filter(|(_, &g)| g > 0)
        .map(|(d, _)| d.as_str())
        .collect();
    if relevant.is_empty() {
        return None;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|doc| relevant.contains(doc.doc_id.as_str()))
        .count();
    Some(hits as f64 / relevant.len() as f64)
}

/// 1 when the top-ranked document is relevant, else 0. Empty runs score 0.
pub fn accuracy_at_1(ranked: &[ScoredDoc], judgments: &QueryJudgments) -> f64 {
    match ranked.first() {
        Some(doc) if judgments.get(&doc.doc_id).copied().unwrap_or(0) > 0 => 1.0,
        _ => 0.0,
    }
}

/// Cutoffs for the standard metric set; accuracy is always at rank 1.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricKs {
    pub ndcg: usize,
    pub mrr: usize,
    pub recall: usize,
}

impl Default for MetricKs {
    fn default() -> Self {
        MetricKs { ndcg: 10, mrr: 10, recall: 100 }
    }
}

/// Metric values for one query.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QueryMetrics {
    pub ndcg: f64,
    pub mrr: f64,
    pub recall: Option<f64>,
    pub accuracy: f64,
}

/// Per-query values plus dataset means for one (run, qrels) pair.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub ks: MetricKs,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub mean_ndcg: f64,
    pub mean_mrr: f64,
    /// `None` when no query in the qrels has a relevant document.
    pub mean_recall: Option<f64>,
    pub mean_accuracy: f64,
}

/// Evaluates a run against qrels over every judged query.
pub fn evaluate_run(run: &RetrievalRun, qrels: &QrelSet, ks: MetricKs) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let (mut ndcg_sum, mut mrr_sum, mut acc_sum) = (0.0, 0.0, 0.0);
    let mut recall_sum = 0.0;
    let mut recall_count = 0usize;

    for (query_id, judgments) in qrels.iter() {
        let ranked = run.ranking(query_id).unwrap_or(&[]);
        let metrics = QueryMetrics {
            ndcg: ndcg_at_k(ranked, judgments, ks.ndcg),
            mrr: mrr_at_k(ranked, judgments, ks.mrr),
            recall: recall_at_k(ranked, judgments, ks.recall),
            accuracy: accuracy_at_1(ranked, judgments),
        };
        ndcg_sum += metrics.ndcg;
        mrr_sum += metrics.mrr;
        acc_sum += metrics.accuracy;
        if let Some(r) = metrics.recall {
            recall_sum += r;
            recall_count += 1;
        }
        per_query.insert(query_id.to_string(), metrics);
    }

    let n = per_query.len() as f64;
    let mean = |sum: f64| if per_query.is_empty() { 0.0 } else { sum / n };
    MetricReport {
        ks,
        mean_ndcg: mean(ndcg_sum),
        mean_mrr: mean(mrr_sum),
        mean_recall: (recall_count > 0).then(|| recall_sum / recall_count as f64),
        mean_accuracy: mean(acc_sum),
        per_query,
    }
}

/// Group means in the layout of the results tables: one row of unweighted
/// per-group means plus the overall mean across all included datasets.
#[derive(Debug, Clone, Serialize)]
pub struct GroupTable {
    pub group_means: BTreeMap<String, f64>,
    /// Unweighted mean over every included dataset (each task counts once).
    pub overall_mean: f64,
    pub excluded: Vec<String>,
}

/// Averages per-dataset scores into per-group means and an overall mean.
///
/// `groups` maps a group name to its member datasets. Every scored dataset
/// must belong to a group; datasets on the exclusion list are dropped from
/// both group and overall means (for models that cannot be fairly evaluated
/// on part of the benchmark).
pub fn aggregate_groups(
    dataset_scores: &BTreeMap<String, f64>,
    groups: &BTreeMap<String, Vec<String>>,
    exclude: &HashSet<String>,
) -> Result<GroupTable> {
    let mut assigned: HashSet<&str> = HashSet::new();
    let mut group_means = BTreeMap::new();
    let mut overall_sum = 0.0;
    let mut overall_count = 0usize;

    for (group, members) in groups {
        let mut sum = 0.0;
        let mut count = 0usize;
        for member in members {
            assigned.insert(member.as_str());
            if exclude.contains(member) {
                continue;
            }
            if let Some(&score) = dataset_scores.get(member) {
                sum += score;
                count += 1;
                overall_sum += score;
                overall_count += 1;
            }
        }
        if count > 0 {
            group_means.insert(group.clone(), sum / count as f64);
        }
    }

    for dataset in dataset_scores.keys() {
        if !assigned.contains(dataset.as_str()) {
            return Err(Error::Validation(format!(
                "dataset {dataset:?} is assigned to no group"
            )));
        }
    }

    let mut excluded: Vec<String> = exclude.iter().cloned().collect();
    excluded.sort();
    Ok(GroupTable {
        group_means,
        overall_mean: if overall_count > 0 { overall_sum / overall_count as f64 } else { 0.0 },
        excluded,
    })
}
