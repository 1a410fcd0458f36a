//! From-scratch pairwise LambdaMART training.
//!
//! Each boosting round ranks every group's documents by the current model
//! scores, then for every in-group pair with differing grades accumulates
//! pairwise lambda gradients weighted by the NDCG change of swapping the
//! pair:
//!
//! ```text
//! rho      = 1 / (1 + exp(sigma * (s_i - s_j)))        (grade_i > grade_j)
//! lambda   = sigma * rho * |dNDCG_ij|                  (+ for i, - for j)
//! hessian  = sigma^2 * rho * (1 - rho) * |dNDCG_ij|
//! ```
//!
//! `|dNDCG|` uses the same convention as the metrics module: linear gain
//! with a `log2(rank + 1)` discount, normalized by the group's ideal DCG.
//! A depth-bounded regression tree is then fit to the accumulated per-doc
//! gradients with exact greedy splits and second-order leaf values
//! `sum(lambda) / (sum(hessian) + l2)`, and the model advances by
//! `learning_rate` times the tree.
//!
//! Row subsampling draws whole query groups (keeping pair structure
//! intact); column subsampling draws a feature subset per tree. With both
//! ratios at 1.0 no randomness is consumed and training is bit-for-bit
//! deterministic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::QrelSet;
use crate::error::{Error, Result};
use crate::metrics::{ndcg_at_k, QueryJudgments};
use crate::run::ScoredDoc;

use super::tree::{Node, RegressionTree, TreeEnsemble};
use super::LtrParams;

/// One query's candidates: parallel doc ids and feature rows.
#[derive(Debug, Clone)]
pub struct QueryGroup {
    pub query_id: String,
    pub doc_ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
}

struct PreparedGroup {
    /// Row offsets into the flat score/gradient arrays.
    rows: Vec<usize>,
    grades: Vec<u32>,
    idcg: f64,
    has_pairs: bool,
    judgments: QueryJudgments,
    doc_ids: Vec<String>,
}

fn ideal_dcg(grades: &[u32], truncation: usize) -> f64 {
    let mut sorted: Vec<u32> = grades.iter().copied().filter(|&g| g > 0).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    sorted
        .iter()
        .take(truncation)
        .enumerate()
        .map(|(i, &g)| g as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// Ranks a group's rows by (score desc, doc id asc) and returns the
/// 1-based rank of each row.
fn current_ranks(group: &PreparedGroup, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..group.rows.len()).collect();
    order.sort_by(|&a, &b| {
        scores[group.rows[b]]
            .total_cmp(&scores[group.rows[a]])
            .then_with(|| group.doc_ids[a].cmp(&group.doc_ids[b]))
    });
    let mut ranks = vec![0usize; order.len()];
    for (rank, &row) in order.iter().enumerate() {
        ranks[row] = rank + 1;
    }
    ranks
}

/// Accumulates lambdas and hessians for one group at the current scores.
fn accumulate_lambdas(
    group: &PreparedGroup,
    scores: &[f64],
    params: &LtrParams,
    lambdas: &mut [f64],
    hessians: &mut [f64],
) {
    if !group.has_pairs || group.idcg == 0.0 {
        return;
    }
    let n = group.rows.len();
    let truncation = params.ndcg_truncation.unwrap_or(n);
    let ranks = current_ranks(group, scores);
    let disc = |rank: usize| -> f64 {
        if rank <= truncation {
            1.0 / ((rank + 1) as f64).log2()
        } else {
            0.0
        }
    };
    for i in 0..n {
        for j in 0..n {
            if group.grades[i] <= group.grades[j] {
                continue;
            }
            let delta_grade = (group.grades[i] - group.grades[j]) as f64;
            let delta_ndcg = delta_grade * (disc(ranks[i]) - disc(ranks[j])).abs() / group.idcg;
            if delta_ndcg == 0.0 {
                continue;
            }
            let s_diff = scores[group.rows[i]] - scores[group.rows[j]];
            let rho = 1.0 / (1.0 + (params.sigma * s_diff).exp());
            let lambda = params.sigma * rho * delta_ndcg;
            let hessian = params.sigma * params.sigma * rho * (1.0 - rho) * delta_ndcg;
            lambdas[group.rows[i]] += lambda;
            lambdas[group.rows[j]] -= lambda;
            hessians[group.rows[i]] += hessian;
            hessians[group.rows[j]] += hessian;
        }
    }
}

struct TreeFitter<'a> {
    features: &'a [Vec<f64>],
    lambdas: &'a [f64],
    hessians: &'a [f64],
    allowed_features: &'a [usize],
    params: &'a LtrParams,
    nodes: Vec<Node>,
}

impl TreeFitter<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&r| self.lambdas[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hessians[r]).sum();
        let denom = h + self.params.l2_leaf_reg;
        if denom > 0.0 {
            g / denom
        } else {
            0.0
        }
    }

    /// Exact greedy split search over the allowed features. Candidates are
    /// midpoints between consecutive distinct values; both children must
    /// keep at least `min_child_weight` total hessian. Ties keep the first
    /// (lowest feature index, lowest threshold) candidate.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let g_total: f64 = rows.iter().map(|&r| self.lambdas[r]).sum();
        let h_total: f64 = rows.iter().map(|&r| self.hessians[r]).sum();
        let l2 = self.params.l2_leaf_reg;
        let parent_gain = g_total * g_total / (h_total + l2);

        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = rows.to_vec();
        for &feature in self.allowed_features {
            sorted.sort_by(|&a, &b| {
                self.features[a][feature]
                    .total_cmp(&self.features[b][feature])
                    .then_with(|| a.cmp(&b))
            });
            let mut g_left = 0.0;
            let mut h_left = 0.0;
            for i in 0..sorted.len() - 1 {
                g_left += self.lambdas[sorted[i]];
                h_left += self.hessians[sorted[i]];
                let v = self.features[sorted[i]][feature];
                let v_next = self.features[sorted[i + 1]][feature];
                if v == v_next {
                    continue;
                }
                let h_right = h_total - h_left;
                if h_left < self.params.min_child_weight || h_right < self.params.min_child_weight {
                    continue;
                }
                let g_right = g_total - g_left;
                let gain =
                    g_left * g_left / (h_left + l2) + g_right * g_right / (h_right + l2) - parent_gain;
                if gain > 1e-12 && best.map_or(true, |(_, _, bg)| gain > bg) {
                    best = Some((feature, (v + v_next) / 2.0, gain));
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        if depth >= self.params.max_depth || rows.len() < 2 {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return self.nodes.len() - 1;
        }
        let Some((feature, threshold, _)) = self.best_split(&rows) else {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return self.nodes.len() - 1;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.features[r][feature] <= threshold);

        let at = self.nodes.len();
        self.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        let Node::Split { left: l, right: r, .. } = &mut self.nodes[at] else {
            unreachable!()
        };
        *l = left;
        *r = right;
        at
    }
}

fn prepare_groups(groups: &[QueryGroup], qrels: &QrelSet, params: &LtrParams) -> Result<(Vec<PreparedGroup>, usize, usize)> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("training groups"));
    }
    let feature_count = groups
        .iter()
        .flat_map(|g| g.features.first())
        .map(Vec::len)
        .next()
        .ok_or(Error::EmptyInput("training feature rows"))?;
    if feature_count == 0 {
        return Err(Error::Validation("feature rows must be non-empty".into()));
    }

    let mut prepared = Vec::with_capacity(groups.len());
    let mut next_row = 0usize;
    let mut any_pairs = false;
    for group in groups {
        if group.doc_ids.len() != group.features.len() {
            return Err(Error::Validation(format!(
                "group {:?}: {} doc ids vs {} feature rows",
                group.query_id,
                group.doc_ids.len(),
                group.features.len()
            )));
        }
        for row in &group.features {
            if row.len() != feature_count {
                return Err(Error::DimensionMismatch { expected: feature_count, actual: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "group {:?}: non-finite feature value",
                    group.query_id
                )));
            }
        }
        let grades: Vec<u32> = group
            .doc_ids
            .iter()
            .map(|d| qrels.grade(&group.query_id, d))
            .collect();
        let has_pairs = grades.iter().any(|&g| g != grades[0]);
        any_pairs |= has_pairs;
        let truncation = params.ndcg_truncation.unwrap_or(grades.len());
        let judgments: QueryJudgments = group
            .doc_ids
            .iter()
            .zip(&grades)
            .map(|(d, &g)| (d.clone(), g))
            .collect();
        prepared.push(PreparedGroup {
            rows: (next_row..next_row + group.doc_ids.len()).collect(),
            idcg: ideal_dcg(&grades, truncation),
            grades,
            has_pairs,
            judgments,
            doc_ids: group.doc_ids.clone(),
        });
        next_row += group.doc_ids.len();
    }
    if !any_pairs {
        return Err(Error::Validation(
            "no trainable pairs: every group has uniform grades".into(),
        ));
    }
    Ok((prepared, feature_count, next_row))
}

/// Mean NDCG@10 over the training groups at the current scores.
fn training_ndcg(prepared: &[PreparedGroup], scores: &[f64]) -> f64 {
    let mut sum = 0.0;
    for group in prepared {
        let mut ranked: Vec<ScoredDoc> = group
            .rows
            .iter()
            .zip(&group.doc_ids)
            .map(|(&r, d)| ScoredDoc::new(d.clone(), scores[r]))
            .collect();
        let n = ranked.len();
        ranked = crate::run::rank_top_k(ranked, n);
        sum += ndcg_at_k(&ranked, &group.judgments, 10);
    }
    sum / prepared.len() as f64
}

/// Trains a LambdaMART ensemble. Grades come from `qrels`; at least one
/// group must contain documents with differing grades.
pub fn train_lambdamart(groups: &[QueryGroup], qrels: &QrelSet, params: &LtrParams) -> Result<TreeEnsemble> {
    train_lambdamart_with_log(groups, qrels, params).map(|(ensemble, _)| ensemble)
}

/// Like [`train_lambdamart`], additionally returning the training NDCG@10
/// after each boosting round.
pub fn train_lambdamart_with_log(
    groups: &[QueryGroup],
    qrels: &QrelSet,
    params: &LtrParams,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    params.validate()?;
    let (prepared, feature_count, n_rows) = prepare_groups(groups, qrels, params)?;

    let flat_features: Vec<Vec<f64>> = groups.iter().flat_map(|g| g.features.iter().cloned()).collect();
    let mut scores = vec![0.0f64; n_rows];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let all_features: Vec<usize> = (0..feature_count).collect();

    let mut trees = Vec::with_capacity(params.n_trees);
    let mut ndcg_log = Vec::with_capacity(params.n_trees);

    for _ in 0..params.n_trees {
        // whole-group row subsampling keeps pairwise structure intact
        let sampled: Vec<usize> = if params.row_subsample < 1.0 {
            let picked: Vec<usize> = (0..prepared.len())
                .filter(|_| rng.gen::<f64>() < params.row_subsample)
                .collect();
            if picked.is_empty() {
                (0..prepared.len()).collect()
            } else {
                picked
            }
        } else {
            (0..prepared.len()).collect()
        };

        let allowed: Vec<usize> = if params.col_subsample_per_tree < 1.0 {
            let n_cols = ((feature_count as f64 * params.col_subsample_per_tree).ceil() as usize)
                .clamp(1, feature_count);
            let mut cols = all_features.clone();
            cols.shuffle(&mut rng);
            cols.truncate(n_cols);
            cols.sort_unstable();
            cols
        } else {
            all_features.clone()
        };

        let mut lambdas = vec![0.0f64; n_rows];
        let mut hessians = vec![0.0f64; n_rows];
        let mut active_rows = Vec::new();
        for &gi in &sampled {
            accumulate_lambdas(&prepared[gi], &scores, params, &mut lambdas, &mut hessians);
            active_rows.extend(prepared[gi].rows.iter().copied());
        }

        let mut fitter = TreeFitter {
            features: &flat_features,
            lambdas: &lambdas,
            hessians: &hessians,
            allowed_features: &allowed,
            params,
            nodes: Vec::new(),
        };
        fitter.build(active_rows, 0);
        let tree = RegressionTree { nodes: fitter.nodes };

        for (row, score) in scores.iter_mut().enumerate() {
            *score += params.learning_rate * tree.predict(&flat_features[row]);
        }
        trees.push(tree);
        ndcg_log.push(training_ndcg(&prepared, &scores));
    }

    let ensemble = TreeEnsemble { trees, learning_rate: params.learning_rate, feature_count };
    Ok((ensemble, ndcg_log))
}
