//! Numerical kernels for the training objectives, with analytic gradients.
//!
//! Three losses are provided: a margin-matching MSE over reference vs model
//! score margins, a contrastive loss with in-batch negatives over
//! temperature-scaled cosine similarities, and an elementwise MSE between
//! teacher and student representation matrices. Each returns the loss value
//! together with its gradient, and every gradient is covered by a central
//! finite-difference check (also runnable from the CLI via `losses check`).
//!
//! Batch reduction is the arithmetic mean throughout, so loss scale does
//! not depend on batch size.
//!
//! The contrastive loss for query `i` in a batch of `K` is
//!
//! ```text
//! -s(q_i, p_i) + log sum_{k != i} exp(s(q_i, p_k)) + log sum_k exp(s(q_i, n_k))
//! ```
//!
//! with `s(u, v) = cos(u, v) / tau`. Note that the first log-sum excludes
//! the query's own positive, unlike standard InfoNCE which includes it;
//! that exclusion is intentional and the tests pin it down.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};

/// Reference (cross-encoder) and model scores for one (q, d+, d-) triple.
#[derive(Debug, Clone, Copy)]
pub struct ScoredTriple {
    pub s_pos: f64,
    pub s_neg: f64,
    pub shat_pos: f64,
    pub shat_neg: f64,
}

/// Gradient of the margin loss with respect to one triple's model scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginMseGrad {
    pub shat_pos: f64,
    pub shat_neg: f64,
}

/// Mean squared difference between reference margins `s+ - s-` and model
/// margins `shat+ - shat-`, with gradients w.r.t. the model scores.
pub fn margin_mse(batch: &[ScoredTriple]) -> Result<(f64, Vec<MarginMseGrad>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("margin_mse batch"));
    }
    for t in batch {
        if ![t.s_pos, t.s_neg, t.shat_pos, t.shat_neg].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("non-finite score in triple".into()));
        }
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for t in batch {
        let residual = (t.s_pos - t.s_neg) - (t.shat_pos - t.shat_neg);
        loss += residual * residual;
        // d/d shat+ of (margin - model_margin)^2 = -2 * residual
        grads.push(MarginMseGrad {
            shat_pos: -2.0 * residual / n,
            shat_neg: 2.0 * residual / n,
        });
    }
    Ok((loss / n, grads))
}

/// A mini-batch of query, positive, and negative embeddings with the
/// temperature used for similarity scaling.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
    pub tau: f64,
}

impl ContrastiveBatch {
    /// Default temperature for the fine-tuning objective.
    pub const DEFAULT_TAU: f64 = 0.01;

    pub fn new(
        queries: Vec<Vec<f64>>,
        positives: Vec<Vec<f64>>,
        negatives: Vec<Vec<f64>>,
        tau: f64,
    ) -> Result<Self> {
        let batch = ContrastiveBatch { queries, positives, negatives, tau };
        batch.validate()?;
        Ok(batch)
    }

    fn validate(&self) -> Result<()> {
        let k = self.queries.len();
        if k < 2 {
            return Err(Error::Validation(format!("batch size must be >= 2, got {k}")));
        }
        if self.positives.len() != k || self.negatives.len() != k {
            return Err(Error::Validation("queries, positives, negatives must have equal length".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Validation(format!("tau must be > 0, got {}", self.tau)));
        }
        let dim = self.queries[0].len();
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be >= 1".into()));
        }
        for row in self.queries.iter().chain(&self.positives).chain(&self.negatives) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("non-finite embedding value".into()));
            }
            if row.iter().map(|v| v * v).sum::<f64>() == 0.0 {
                return Err(Error::Validation("zero-norm embedding".into()));
            }
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.queries.len()
    }
}

/// Gradients of the contrastive loss with respect to every embedding.
#[derive(Debug, Clone)]
pub struct MnrGradients {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log(sum(exp(x))) with max subtraction; `None` entries are skipped.
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Contrastive loss with in-batch negatives over `s(u, v) = cos(u, v)/tau`,
/// averaged over queries, with gradients for all three embedding matrices.
pub fn mnr_loss(batch: &ContrastiveBatch) -> Result<(f64, MnrGradients)> {
    batch.validate()?;
    let k = batch.batch_size();
    let dim = batch.queries[0].len();
    let tau = batch.tau;

    let qnorms: Vec<f64> = batch.queries.iter().map(|v| norm(v)).collect();
    let pnorms: Vec<f64> = batch.positives.iter().map(|v| norm(v)).collect();
    let nnorms: Vec<f64> = batch.negatives.iter().map(|v| norm(v)).collect();

    // cosine matrices: cp[i][j] = cos(q_i, p_j), cn[i][j] = cos(q_i, n_j)
    let mut cp = vec![vec![0.0; k]; k];
    let mut cn = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            cp[i][j] = dot(&batch.queries[i], &batch.positives[j]) / (qnorms[i] * pnorms[j]);
            cn[i][j] = dot(&batch.queries[i], &batch.negatives[j]) / (qnorms[i] * nnorms[j]);
        }
    }

    let mut loss = 0.0;
    // dL/d cp[i][j] and dL/d cn[i][j]
    let mut gp = vec![vec![0.0; k]; k];
    let mut gn = vec![vec![0.0; k]; k];
    let inv_ktau = 1.0 / (k as f64 * tau);

    for i in 0..k {
        let pos_terms = (0..k).filter(|&j| j != i).map(|j| cp[i][j] / tau).collect::<Vec<_>>();
        let neg_terms = (0..k).map(|j| cn[i][j] / tau).collect::<Vec<_>>();
        let lse_pos = log_sum_exp(pos_terms.iter().copied());
        let lse_neg = log_sum_exp(neg_terms.iter().copied());
        loss += -cp[i][i] / tau + lse_pos + lse_neg;

        gp[i][i] -= inv_ktau;
        for (slot, j) in (0..k).filter(|&j| j != i).enumerate() {
            gp[i][j] += inv_ktau * (pos_terms[slot] - lse_pos).exp();
        }
        for j in 0..k {
            gn[i][j] += inv_ktau * (neg_terms[j] - lse_neg).exp();
        }
    }
    loss /= k as f64;

    // chain rule through cos(u, v): dc/du = v/(|u||v|) - c * u/|u|^2
    let mut grads = MnrGradients {
        queries: vec![vec![0.0; dim]; k],
        positives: vec![vec![0.0; dim]; k],
        negatives: vec![vec![0.0; dim]; k],
    };
    for i in 0..k {
        for j in 0..k {
            for (docs, coeffs, cos, dnorms, doc_grads) in [
                (&batch.positives, &gp, &cp, &pnorms, &mut grads.positives),
                (&batch.negatives, &gn, &cn, &nnorms, &mut grads.negatives),
            ] {
                let g = coeffs[i][j];
                if g == 0.0 {
                    continue;
                }
                let c = cos[i][j];
                let inv_uv = 1.0 / (qnorms[i] * dnorms[j]);
                let inv_uu = 1.0 / (qnorms[i] * qnorms[i]);
                let inv_vv = 1.0 / (dnorms[j] * dnorms[j]);
                for d in 0..dim {
                    grads.queries[i][d] += g * (docs[j][d] * inv_uv - c * batch.queries[i][d] * inv_uu);
                    doc_grads[j][d] += g * (batch.queries[i][d] * inv_uv - c * docs[j][d] * inv_vv);
                }
            }
        }
    }
    Ok((loss, grads))
}

/// Elementwise mean squared error between two equally shaped matrices, with
/// the gradient w.r.t. the student: `2 (student - teacher) / n`.
pub fn distill_mse(teacher: &[Vec<f64>], student: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    if teacher.len() != student.len() {
        return Err(Error::DimensionMismatch { expected: teacher.len(), actual: student.len() });
    }
    let total: usize = teacher.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::EmptyInput("distill_mse matrices"));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(student.len());
    for (trow, srow) in teacher.iter().zip(student) {
        if trow.len() != srow.len() {
            return Err(Error::DimensionMismatch { expected: trow.len(), actual: srow.len() });
        }
        let mut grow = Vec::with_capacity(srow.len());
        for (&t, &s) in trow.iter().zip(srow) {
            let diff = s - t;
            loss += diff * diff;
            grow.push(2.0 * diff / total as f64);
        }
        grads.push(grow);
    }
    Ok((loss / total as f64, grads))
}

/// A source/translation sentence pair with an externally computed
/// similarity score.
#[derive(Debug, Clone, PartialEq)]
pub struct BilingualPair {
    pub source_text: String,
    pub target_text: String,
    pub similarity: f64,
}

/// Keeps pairs whose similarity is at or above the threshold (pairs scoring
/// lower are discarded), preserving input order.
pub fn filter_bilingual_pairs(pairs: Vec<BilingualPair>, threshold: f64) -> Vec<BilingualPair> {
    pairs.into_iter().filter(|p| p.similarity >= threshold).collect()
}

/// Central finite-difference gradient of `f` at `point`.
pub fn central_difference_gradient<F>(f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + h;
        let plus = f(&probe);
        probe[i] = point[i] - h;
        let minus = f(&probe);
        probe[i] = point[i];
        grads.push((plus - minus) / (2.0 * h));
    }
    grads
}

/// Relative error between an analytic and a finite-difference gradient
/// entry, with an absolute floor so near-zero gradients do not explode.
pub fn gradient_relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        return (analytic - numeric).abs();
    }
    (analytic - numeric).abs() / scale
}

/// Outcome of the built-in finite-difference suite (`losses check`).
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub points_per_loss: usize,
    pub max_rel_err_margin_mse: f64,
    pub max_rel_err_mnr: f64,
    pub max_rel_err_distill: f64,
}

impl GradCheckReport {
    pub fn max_overall(&self) -> f64 {
        self.max_rel_err_margin_mse
            .max(self.max_rel_err_mnr)
            .max(self.max_rel_err_distill)
    }
}

/// Runs central finite-difference checks (step `h = 1e-5`) for all three
/// loss kernels at `points` random points each and reports the worst
/// relative error per kernel.
pub fn finite_difference_suite(seed: u64, points: usize) -> GradCheckReport {
    let mut rng = StdRng::seed_from_u64(seed);
    let h = 1e-5;
    let mut report = GradCheckReport {
        points_per_loss: points,
        max_rel_err_margin_mse: 0.0,
        max_rel_err_mnr: 0.0,
        max_rel_err_distill: 0.0,
    };

    for _ in 0..points {
        // margin MSE over a small batch; flatten (shat+, shat-) per triple
        let n = rng.gen_range(1..4usize);
        let refs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let point: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let eval = |x: &[f64]| {
            let batch: Vec<ScoredTriple> = refs
                .iter()
                .enumerate()
                .map(|(i, &(s_pos, s_neg))| ScoredTriple {
                    s_pos,
                    s_neg,
                    shat_pos: x[2 * i],
                    shat_neg: x[2 * i + 1],
                })
                .collect();
            margin_mse(&batch).unwrap().0
        };
        let numeric = central_difference_gradient(eval, &point, h);
        let batch: Vec<ScoredTriple> = refs
            .iter()
            .enumerate()
            .map(|(i, &(s_pos, s_neg))| ScoredTriple {
                s_pos,
                s_neg,
                shat_pos: point[2 * i],
                shat_neg: point[2 * i + 1],
            })
            .collect();
        let (_, analytic) = margin_mse(&batch).unwrap();
        for (i, g) in analytic.iter().enumerate() {
            report.max_rel_err_margin_mse = report
                .max_rel_err_margin_mse
                .max(gradient_relative_error(g.shat_pos, numeric[2 * i]))
                .max(gradient_relative_error(g.shat_neg, numeric[2 * i + 1]));
        }
    }

    for _ in 0..points {
        let k = rng.gen_range(2..5usize);
        let dim = rng.gen_range(3..6usize);
        let tau = rng.gen_range(0.2..1.0);
        let flat_len = 3 * k * dim;
        let point: Vec<f64> = (0..flat_len).map(|_| rng.gen_range(-1.0..1.0) + 0.1).collect();
        let unflatten = |x: &[f64]| {
            let rows =
                |off: usize| (0..k).map(|i| x[off + i * dim..off + (i + 1) * dim].to_vec()).collect::<Vec<_>>();
            ContrastiveBatch {
                queries: rows(0),
                positives: rows(k * dim),
                negatives: rows(2 * k * dim),
                tau,
            }
        };
        let numeric = central_difference_gradient(|x| mnr_loss(&unflatten(x)).unwrap().0, &point, h);
        let (_, analytic) = mnr_loss(&unflatten(&point)).unwrap();
        let flat_analytic: Vec<f64> = analytic
            .queries
            .into_iter()
            .chain(analytic.positives)
            .chain(analytic.negatives)
            .flatten()
            .collect();
        for (a, n) in flat_analytic.iter().zip(&numeric) {
            report.max_rel_err_mnr = report.max_rel_err_mnr.max(gradient_relative_error(*a, *n));
        }
    }

    for _ in 0..points {
        let rows = rng.gen_range(1..4usize);
        let cols = rng.gen_range(1..5usize);
        let teacher: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let point: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let unflatten = |x: &[f64]| {
            (0..rows).map(|i| x[i * cols..(i + 1) * cols].to_vec()).collect::<Vec<Vec<f64>>>()
        };
        let numeric =
            central_difference_gradient(|x| distill_mse(&teacher, &unflatten(x)).unwrap().0, &point, h);
        let (_, analytic) = distill_mse(&teacher, &unflatten(&point)).unwrap();
        for (a, n) in analytic.iter().flatten().zip(&numeric) {
            report.max_rel_err_distill = report.max_rel_err_distill.max(gradient_relative_error(*a, *n));
        }
    }

    report
}
