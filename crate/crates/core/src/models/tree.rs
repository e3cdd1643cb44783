//! Binary classification trees grown greedily on Gini impurity.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{check_width, Model, Prediction};
use crate::data::{EvalSample, Task};
use crate::error::{Result, XperError};
use crate::metrics::auc;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

/// Impurity decreases at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    pub max_depth: usize,
    /// Depth up to which the best available split is taken even when it
    /// does not reduce impurity.
    pub min_depth: Option<usize>,
    pub min_leaf: usize,
    /// Orders the feature scan, which decides between equally good splits.
    pub seed: u64,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            max_depth: 5,
            min_depth: None,
            min_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode<T> {
    Leaf {
        probability: T,
        depth: usize,
        count: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        depth: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    nodes: Vec<TreeNode<T>>,
    n_features: usize,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                TreeNode::Leaf { depth, .. } | TreeNode::Split { depth, .. } => *depth,
            })
            .max()
            .unwrap_or(0)
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_of(&self, row: &[T]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { .. } => return at,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

impl<T: Scalar> Model<T> for DecisionTree<T> {
    fn task(&self) -> Task {
        Task::BinaryClassification
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: &[T]) -> Result<Vec<Prediction<T>>> {
        check_width(rows, self.n_features)?;
        Ok(rows
            .chunks_exact(self.n_features)
            .map(|r| match self.nodes[self.leaf_of(r)] {
                TreeNode::Leaf { probability, .. } => Prediction::probability(probability, probability),
                TreeNode::Split { .. } => unreachable!("leaf_of returns leaves"),
            })
            .collect())
    }
}

struct Grower<'a, T> {
    sample: &'a EvalSample<T>,
    config: CartConfig,
    forced_depth: usize,
    feature_order: Vec<usize>,
    nodes: Vec<TreeNode<T>>,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    impurity: f64,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl<'a, T: Scalar> Grower<'a, T> {
    fn is_positive(&self, i: usize) -> bool {
        self.sample.target()[i] == T::one()
    }

    fn best_split(&self, rows: &[usize]) -> Option<BestSplit<T>> {
        let n = rows.len();
        let min_leaf = self.config.min_leaf;
        let mut best: Option<BestSplit<T>> = None;
        let mut pairs: Vec<(T, bool)> = Vec::with_capacity(n);
        for &j in &self.feature_order {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.sample.row(i)[j], self.is_positive(i))));
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let total_pos = pairs.iter().filter(|p| p.1).count();
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += usize::from(pairs[k - 1].1);
                if k < min_leaf || n - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                    continue;
                }
                let impurity = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(total_pos - left_pos, n - k))
                    / n as f64;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                    let mut threshold = (lo + hi) / T::lit(2.0);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: j,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        let pos = rows.iter().filter(|&&i| self.is_positive(i)).count();
        let probability = T::from_count(pos) / T::from_count(rows.len());
        self.nodes.push(TreeNode::Leaf {
            probability,
            depth,
            count: rows.len(),
        });
        let pure = pos == 0 || pos == rows.len();
        if pure || depth >= self.config.max_depth {
            return slot;
        }
        let Some(split) = self.best_split(&rows) else {
            return slot;
        };
        let forced = depth < self.forced_depth;
        if !forced && gini(pos, rows.len()) - split.impurity <= MIN_GAIN {
            return slot;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.sample.row(i)[split.feature] <= split.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[slot] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            depth,
        };
        slot
    }
}

/// Grows a classification tree on a 0/1 target.
pub fn fit_cart<T: Scalar>(train: &EvalSample<T>, config: &CartConfig) -> Result<DecisionTree<T>> {
    if train.task() != Task::BinaryClassification {
        return Err(XperError::Domain("trees need a 0/1 classification target".into()));
    }
    if config.max_depth == 0 {
        return Err(XperError::Config("max_depth must be at least 1".into()));
    }
    if config.min_leaf == 0 || 2 * config.min_leaf > train.n() {
        return Err(XperError::Config(format!(
            "min_leaf = {} is infeasible for {} rows",
            config.min_leaf,
            train.n()
        )));
    }
    let mut feature_order: Vec<usize> = (0..train.q()).collect();
    feature_order.shuffle(&mut seeded(config.seed));
    let mut grower = Grower {
        sample: train,
        config: *config,
        forced_depth: config.min_depth.unwrap_or(0).min(config.max_depth),
        feature_order,
        nodes: Vec::new(),
    };
    grower.grow((0..train.n()).collect(), 0);
    Ok(DecisionTree {
        nodes: grower.nodes,
        n_features: train.q(),
    })
}

/// Chooses `max_depth` by stratified k-fold validation AUC.
///
/// Every other setting comes from `base`. Equal scores resolve to the
/// smaller depth.
pub fn cross_validate_depth<T: Scalar>(
    train: &EvalSample<T>,
    depths: &[usize],
    folds: usize,
    base: &CartConfig,
    seed: u64,
) -> Result<usize> {
    if folds < 2 {
        return Err(XperError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if depths.is_empty() {
        return Err(XperError::Config("no candidate depths".into()));
    }
    let fold_of = stratified_folds(train, folds, seed)?;
    let mut candidates = depths.to_vec();
    candidates.sort_unstable();
    candidates.dedup();

    let mut splits = Vec::with_capacity(folds);
    for f in 0..folds {
        let fit_rows: Vec<usize> = (0..train.n()).filter(|&i| fold_of[i] != f).collect();
        let val_rows: Vec<usize> = (0..train.n()).filter(|&i| fold_of[i] == f).collect();
        splits.push((train.subset(&fit_rows)?, train.subset(&val_rows)?));
    }

    let mut best: Option<(usize, f64)> = None;
    for &depth in &candidates {
        let config = CartConfig {
            max_depth: depth,
            ..*base
        };
        let mut total = 0.0;
        for (fit, val) in &splits {
            let tree = fit_cart(fit, &config)?;
            let preds = tree.predict(val.features())?;
            let scores: Vec<T> = preds.iter().map(Prediction::value).collect();
            total += auc(val.target(), &scores)?.as_f64();
        }
        let mean = total / folds as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((depth, mean));
        }
    }
    Ok(best.expect("at least one depth").0)
}

fn stratified_folds<T: Scalar>(sample: &EvalSample<T>, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut fold_of = vec![0; sample.n()];
    let mut rng = seeded(derive_seed(seed, 0xF01D));
    for class in [T::zero(), T::one()] {
        let mut members: Vec<usize> = (0..sample.n())
            .filter(|&i| sample.target()[i] == class)
            .collect();
        if members.len() < folds {
            return Err(XperError::StratificationInfeasible(format!(
                "class {class} has {} member(s) for {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (rank, i) in members.into_iter().enumerate() {
            fold_of[i] = rank % folds;
        }
    }
    Ok(fold_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::simulate_latent_probit;

    fn step_sample() -> EvalSample<f64> {
        let mut features = Vec::new();
        let mut target = Vec::new();
        for i in 0..40 {
            let x1 = i as f64 / 10.0 - 2.0 + 0.05;
            features.extend([x1, ((i * 7) % 11) as f64]);
            target.push(if x1 > 0.0 { 1.0 } else { 0.0 });
        }
        EvalSample::new(features, target, Task::BinaryClassification).unwrap()
    }

    #[test]
    fn one_split_separates_a_step() {
        let s = step_sample();
        let tree = fit_cart(
            &s,
            &CartConfig {
                max_depth: 1,
                ..Default::default()
            },
        )
        .unwrap();
        match tree.nodes()[0] {
            TreeNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert!(threshold.abs() < 0.1);
            }
            _ => panic!("root should split"),
        }
        let preds = tree.predict(s.features()).unwrap();
        let correct = preds
            .iter()
            .zip(s.target())
            .filter(|(p, &y)| p.label(0.5).unwrap() == y)
            .count();
        assert_eq!(correct, s.n());
    }

    #[test]
    fn pure_nodes_are_leaves() {
        let s = EvalSample::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0; 4], Task::BinaryClassification)
            .unwrap();
        let tree = fit_cart(&s, &CartConfig::default()).unwrap();
        assert_eq!(tree.nodes().len(), 1);
    }

    #[test]
    fn forced_depth_splits_without_gain() {
        // Labels alternate so no single threshold helps, yet depth is forced.
        let s = EvalSample::new(
            (0..16).map(f64::from).collect(),
            (0..16).map(|i| f64::from(i % 2)).collect(),
            Task::BinaryClassification,
        )
        .unwrap();
        let free = fit_cart(&s, &CartConfig { max_depth: 6, ..Default::default() }).unwrap();
        let forced = fit_cart(
            &s,
            &CartConfig {
                max_depth: 6,
                min_depth: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(forced.depth() >= 3);
        assert!(forced.nodes().len() >= free.nodes().len());
    }

    #[test]
    fn training_rows_reach_the_leaf_containing_them() {
        let s: EvalSample<f64> =
            simulate_latent_probit(&[0.0, 1.0, 1.0], &[1.0, 1.0], 300, 3).unwrap();
        let tree = fit_cart(&s, &CartConfig { max_depth: 6, min_leaf: 3, ..Default::default() }).unwrap();
        for row in s.rows() {
            let leaf = tree.leaf_of(row);
            let mut at = 0;
            while at != leaf {
                match tree.nodes()[at] {
                    TreeNode::Split { feature, threshold, left, right, .. } => {
                        at = if row[feature] <= threshold { left } else { right };
                    }
                    TreeNode::Leaf { .. } => panic!("left the path"),
                }
            }
            assert!(matches!(tree.nodes()[leaf], TreeNode::Leaf { .. }));
        }
    }

    #[test]
    fn infeasible_min_leaf_is_a_config_error() {
        let s = step_sample();
        for min_leaf in [0, 21] {
            assert!(matches!(
                fit_cart(&s, &CartConfig { min_leaf, ..Default::default() }),
                Err(XperError::Config(_))
            ));
        }
    }

    #[test]
    fn cross_validation_prefers_the_shallowest_sufficient_depth() {
        let s = step_sample();
        let depth = cross_validate_depth(&s, &[1, 2, 3, 4, 5], 5, &CartConfig::default(), 9).unwrap();
        assert_eq!(depth, 1);
        assert!(matches!(
            cross_validate_depth(&s, &[1, 2], 1, &CartConfig::default(), 9),
            Err(XperError::Config(_))
        ));
    }

    #[test]
    fn batch_predictions_concatenate() {
        let s: EvalSample<f64> =
            simulate_latent_probit(&[0.0, 1.0, 1.0], &[1.0, 1.0], 200, 5).unwrap();
        let tree = fit_cart(&s, &CartConfig { max_depth: 4, ..Default::default() }).unwrap();
        let all = tree.predict(s.features()).unwrap();
        let mut parts = tree.predict(&s.features()[..2 * 77]).unwrap();
        parts.extend(tree.predict(&s.features()[2 * 77..]).unwrap());
        assert_eq!(all, parts);
    }
}
