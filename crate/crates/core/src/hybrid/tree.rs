//! Regression trees and the boosted ensemble used by the fusion rescorer.

use crate::error::{Error, Result};

/// One node of a regression tree. Rows with `features[feature] <= threshold`
/// descend left, the rest right.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// An axis-aligned regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<Node>,
}

impl RegressionTree {
    /// A single-leaf tree.
    pub fn leaf(value: f64) -> Self {
        RegressionTree { nodes: vec![Node::Leaf { value }] }
    }

    /// A tree from explicit nodes; node 0 is the root. Consistency (child
    /// indexes, feature range) is checked when the tree enters a
    /// [`TreeEnsemble`].
    pub fn from_nodes(nodes: Vec<Node>) -> Self {
        RegressionTree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if features[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn validate(&self, feature_count: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Validation("tree has no nodes".into()));
        }
        for node in &self.nodes {
            match node {
                Node::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::Validation("non-finite leaf value".into()));
                    }
                }
                Node::Split { feature, threshold, left, right } => {
                    if *feature >= feature_count {
                        return Err(Error::Validation(format!(
                            "split feature {feature} out of range (feature count {feature_count})"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Validation("non-finite split threshold".into()));
                    }
                    if *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(Error::Validation("child index out of range".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A boosted ensemble of regression trees over fixed-width feature vectors.
///
/// Predictions are `learning_rate * sum of per-tree leaf values`; leaf
/// values are stored unshrunk.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub(crate) trees: Vec<RegressionTree>,
    pub(crate) learning_rate: f64,
    pub(crate) feature_count: usize,
}

impl TreeEnsemble {
    /// Assembles an ensemble from trees. An empty tree list is permitted
    /// (it predicts 0 for everything) but training never returns one.
    pub fn from_parts(trees: Vec<RegressionTree>, learning_rate: f64, feature_count: usize) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::Validation("feature count must be >= 1".into()));
        }
        if !learning_rate.is_finite() {
            return Err(Error::Validation("non-finite learning rate".into()));
        }
        for tree in &trees {
            tree.validate(feature_count)?;
        }
        Ok(TreeEnsemble { trees, learning_rate, feature_count })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                actual: features.len(),
            });
        }
        Ok(self.predict_unchecked(features))
    }

    pub(crate) fn predict_unchecked(&self, features: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(features)).sum();
        self.learning_rate * sum
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|row| self.predict(row)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ensemble_predicts_zero() {
        let ensemble = TreeEnsemble::from_parts(vec![], 0.3, 4).unwrap();
        assert_eq!(ensemble.predict(&[0.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn single_leaf_prediction_is_value_times_learning_rate() {
        let ensemble = TreeEnsemble::from_parts(vec![RegressionTree::leaf(2.0)], 0.3, 4).unwrap();
        assert!((ensemble.predict(&[0.0; 4]).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn split_routing_is_left_on_at_most_threshold() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 1.0 },
            ],
        };
        assert_eq!(tree.predict(&[9.0, 0.5]), -1.0);
        assert_eq!(tree.predict(&[9.0, 0.6]), 1.0);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let ensemble = TreeEnsemble::from_parts(vec![RegressionTree::leaf(1.0)], 0.3, 8).unwrap();
        assert!(matches!(
            ensemble.predict(&[0.0; 12]),
            Err(Error::DimensionMismatch { expected: 8, actual: 12 })
        ));
    }

    #[test]
    fn from_parts_validates_split_features() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split { feature: 7, threshold: 0.0, left: 1, right: 2 },
                Node::Leaf { value: 0.0 },
                Node::Leaf { value: 0.0 },
            ],
        };
        assert!(TreeEnsemble::from_parts(vec![tree.clone()], 0.3, 8).is_ok());
        assert!(TreeEnsemble::from_parts(vec![tree], 0.3, 7).is_err());
    }

    #[test]
    fn batch_predict_equals_per_row_predict() {
        let tree = RegressionTree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 1.5, left: 1, right: 2 },
                Node::Leaf { value: 0.25 },
                Node::Leaf { value: 4.0 },
            ],
        };
        let ensemble = TreeEnsemble::from_parts(vec![tree, RegressionTree::leaf(1.0)], 0.5, 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 3.0, -(i as f64)]).collect();
        let batch = ensemble.predict_batch(&rows).unwrap();
        for (row, &b) in rows.iter().zip(&batch) {
            assert_eq!(ensemble.predict(row).unwrap(), b);
        }
    }
}
