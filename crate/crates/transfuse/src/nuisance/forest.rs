//! Bagged regression/classification trees (random forest) built from scratch.
//!
//! Each tree is CART-style: bootstrap the training rows, then recursively
//! split on the best of `mtry` randomly chosen features by squared-error
//! reduction (for 0/1 labels this is equivalent to Gini ranking). Leaves store
//! the in-bag mean (class fraction for classification); the forest predicts
//! the mean over trees. Everything is deterministic given the seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Marker stored in [`Node::feature`] for leaf nodes.
const LEAF: u32 = u32::MAX;

/// Forest hyperparameters. `mtry = None` picks the task default:
/// `ceil(p/3)` for regression, `ceil(sqrt(p))` for classification.
///
/// Classification leaves default to `n / 15` training rows (at least
/// `min_leaf`): class fractions from small leaves are too noisy once they
/// land in inverse-probability denominators, where an underestimate gets
/// magnified into an extreme weight. Regression leaves stay granular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyperParams {
    /// Number of bagged trees.
    pub n_trees: usize,
    /// Minimum in-bag samples per leaf (regression).
    pub min_leaf: usize,
    /// Minimum in-bag samples per leaf for classification;
    /// `None` = `max(min_leaf, n / 15)`.
    pub min_leaf_class: Option<usize>,
    /// Candidate features per split; `None` = task default.
    pub mtry: Option<usize>,
    /// Depth cap; `None` = unlimited.
    pub max_depth: Option<usize>,
}

impl Default for ForestHyperParams {
    fn default() -> Self {
        Self { n_trees: 100, min_leaf: 20, min_leaf_class: None, mtry: None, max_depth: None }
    }
}

/// Prediction task; controls the default `mtry` and documents the label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestTask {
    /// Continuous targets.
    Regression,
    /// Binary 0/1 targets; predictions are class fractions in `[0, 1]`.
    Classification,
}

#[derive(Debug, Clone)]
struct Node {
    /// Splitting feature, or [`LEAF`].
    feature: u32,
    /// Split threshold (`x[feature] <= threshold` goes left); for leaves,
    /// the fitted value.
    threshold: f64,
    /// Index of the left child; the right child is `left + 1`.
    left: u32,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            let node = &self.nodes[at];
            if node.feature == LEAF {
                return node.threshold;
            }
            at = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.left as usize + 1
            };
        }
    }
}

/// A fitted forest.
#[derive(Debug, Clone)]
pub struct ForestModelFit {
    trees: Vec<Tree>,
    n_features: usize,
    /// Task the forest was trained for.
    pub task: ForestTask,
}

impl ForestModelFit {
    /// Mean prediction over all trees.
    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    /// Number of trees in the ensemble.
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    targets: &'a [f64],
    min_leaf: usize,
    mtry: usize,
    max_depth: usize,
    nodes: Vec<Node>,
    sort_buf: Vec<(f64, f64)>,
    left_buf: Vec<u32>,
    right_buf: Vec<u32>,
    feat_order: Vec<u32>,
}

struct BestSplit {
    feature: u32,
    threshold: f64,
    left_count: usize,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, idx: &mut [u32], rng: &mut ChaCha12Rng) -> Tree {
        self.nodes.clear();
        self.nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0 });
        let mut stack: Vec<(usize, usize, usize, usize)> = vec![(0, 0, idx.len(), 0)];
        while let Some((slot, start, end, depth)) = stack.pop() {
            match self.try_split(&idx[start..end], depth, rng) {
                Some(split) => {
                    let f = split.feature as usize;
                    self.left_buf.clear();
                    self.right_buf.clear();
                    for &i in &idx[start..end] {
                        if self.columns[f][i as usize] <= split.threshold {
                            self.left_buf.push(i);
                        } else {
                            self.right_buf.push(i);
                        }
                    }
                    debug_assert_eq!(self.left_buf.len(), split.left_count);
                    idx[start..start + self.left_buf.len()].copy_from_slice(&self.left_buf);
                    idx[start + self.left_buf.len()..end].copy_from_slice(&self.right_buf);
                    let left_slot = self.nodes.len();
                    self.nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0 });
                    self.nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0 });
                    self.nodes[slot] = Node {
                        feature: split.feature,
                        threshold: split.threshold,
                        left: left_slot as u32,
                    };
                    let mid = start + split.left_count;
                    stack.push((left_slot, start, mid, depth + 1));
                    stack.push((left_slot + 1, mid, end, depth + 1));
                }
                None => {
                    let m = (end - start) as f64;
                    let mean =
                        idx[start..end].iter().map(|&i| self.targets[i as usize]).sum::<f64>() / m;
                    self.nodes[slot] = Node { feature: LEAF, threshold: mean, left: 0 };
                }
            }
        }
        Tree { nodes: std::mem::take(&mut self.nodes) }
    }

    fn try_split(&mut self, idx: &[u32], depth: usize, rng: &mut ChaCha12Rng) -> Option<BestSplit> {
        let m = idx.len();
        if m < 2 * self.min_leaf || depth >= self.max_depth {
            return None;
        }
        let first = self.targets[idx[0] as usize];
        if idx.iter().all(|&i| self.targets[i as usize] == first) {
            return None;
        }
        let p = self.columns.len();
        // Partial Fisher-Yates to draw `mtry` distinct candidate features.
        for j in 0..self.mtry {
            let k = rng.gen_range(j..p);
            self.feat_order.swap(j, k);
        }
        let mut best: Option<BestSplit> = None;
        let mut best_gain = f64::NEG_INFINITY;
        for cand in 0..self.mtry {
            let f = self.feat_order[cand] as usize;
            let col = &self.columns[f];
            self.sort_buf.clear();
            self.sort_buf
                .extend(idx.iter().map(|&i| (col[i as usize], self.targets[i as usize])));
            self.sort_buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.sort_buf[0].0 == self.sort_buf[m - 1].0 {
                continue;
            }
            let total: f64 = self.sort_buf.iter().map(|(_, t)| t).sum();
            let mut left_sum = 0.0;
            for k in 1..m {
                left_sum += self.sort_buf[k - 1].1;
                if k < self.min_leaf || m - k < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (self.sort_buf[k - 1].0, self.sort_buf[k].0);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain =
                    left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64;
                if gain > best_gain {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best_gain = gain;
                    best = Some(BestSplit { feature: f as u32, threshold, left_count: k });
                }
            }
        }
        best
    }
}

/// Fits a bagged forest of `hp.n_trees` CART trees on `xs`/`targets`.
///
/// Classification targets must be coded 0.0/1.0. Identical
/// `(data, task, hp, seed)` always reproduce the identical forest.
pub fn fit_forest<R: AsRef<[f64]>>(
    xs: &[R],
    targets: &[f64],
    task: ForestTask,
    hp: &ForestHyperParams,
    seed: u64,
) -> Result<ForestModelFit> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("forest fit received no rows".into()));
    }
    if xs.len() != targets.len() {
        return Err(Error::Config(format!(
            "forest fit received {} rows but {} targets",
            xs.len(),
            targets.len()
        )));
    }
    let p = xs[0].as_ref().len();
    if p == 0 || xs.iter().any(|r| r.as_ref().len() != p) {
        return Err(Error::Config("forest fit received empty or ragged feature rows".into()));
    }
    if hp.n_trees == 0 || hp.min_leaf == 0 {
        return Err(Error::Config("forest needs n_trees >= 1 and min_leaf >= 1".into()));
    }
    if task == ForestTask::Classification && targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::Config("classification targets must be coded 0.0/1.0".into()));
    }
    let n = xs.len();
    let mtry = hp
        .mtry
        .unwrap_or(match task {
            ForestTask::Regression => p.div_ceil(3),
            ForestTask::Classification => (p as f64).sqrt().ceil() as usize,
        })
        .clamp(1, p);
    let min_leaf = match task {
        ForestTask::Regression => hp.min_leaf,
        ForestTask::Classification => {
            hp.min_leaf_class.unwrap_or_else(|| hp.min_leaf.max(n / 15)).max(1)
        }
    };

    // Column-major copy for cache-friendly split scans.
    let columns: Vec<Vec<f64>> =
        (0..p).map(|j| xs.iter().map(|r| r.as_ref()[j]).collect()).collect();

    let mut builder = TreeBuilder {
        columns: &columns,
        targets,
        min_leaf,
        mtry,
        max_depth: hp.max_depth.unwrap_or(usize::MAX),
        nodes: Vec::new(),
        sort_buf: Vec::with_capacity(n),
        left_buf: Vec::with_capacity(n),
        right_buf: Vec::with_capacity(n),
        feat_order: (0..p as u32).collect(),
    };

    let mut idx: Vec<u32> = vec![0; n];
    let mut trees = Vec::with_capacity(hp.n_trees);
    for t in 0..hp.n_trees {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, t as u64));
        for slot in idx.iter_mut() {
            *slot = rng.gen_range(0..n) as u32;
        }
        trees.push(builder.build(&mut idx, &mut rng));
    }
    Ok(ForestModelFit { trees, n_features: p, task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn probe_grid() -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                out.push(vec![i as f64 / 2.0, j as f64 / 2.0]);
            }
        }
        out
    }

    fn simulate_regression(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = rng.gen_range(-2.0..2.0);
            let x2: f64 = rng.gen_range(-2.0..2.0);
            ys.push((2.0 * x1).sin() + x2 * x2 + 0.05 * rng.gen_range(-1.0..1.0));
            xs.push(vec![x1, x2]);
        }
        (xs, ys)
    }

    #[test]
    fn constant_targets_yield_a_constant_predictor() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ys = vec![2.5; 40];
        let hp = ForestHyperParams { n_trees: 25, ..Default::default() };
        let fit = fit_forest(&xs, &ys, ForestTask::Regression, &hp, 3).unwrap();
        for x in probe_grid() {
            assert_abs_diff_eq!(fit.predict(&x), 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise_different_seed_does_not() {
        let (xs, ys) = simulate_regression(300, 5);
        let hp = ForestHyperParams { n_trees: 30, ..Default::default() };
        let f1 = fit_forest(&xs, &ys, ForestTask::Regression, &hp, 11).unwrap();
        let f2 = fit_forest(&xs, &ys, ForestTask::Regression, &hp, 11).unwrap();
        let f3 = fit_forest(&xs, &ys, ForestTask::Regression, &hp, 12).unwrap();
        let mut any_diff = false;
        for x in probe_grid() {
            assert_eq!(f1.predict(&x).to_bits(), f2.predict(&x).to_bits());
            any_diff |= f1.predict(&x) != f3.predict(&x);
        }
        assert!(any_diff, "different seeds produced identical forests");
    }

    #[test]
    fn beats_the_constant_baseline_on_a_nonlinear_signal() {
        let (xs, ys) = simulate_regression(600, 9);
        let fit =
            fit_forest(&xs, &ys, ForestTask::Regression, &ForestHyperParams::default(), 1).unwrap();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let (test_xs, test_ys) = simulate_regression(400, 10);
        let sse: f64 =
            test_xs.iter().zip(&test_ys).map(|(x, y)| (fit.predict(x) - y).powi(2)).sum();
        let sst: f64 = test_ys.iter().map(|y| (y - mean).powi(2)).sum();
        assert!(
            sse < 0.5 * sst,
            "forest out-of-sample R^2 too low: SSE {sse:.2} vs SST {sst:.2}"
        );
    }

    #[test]
    fn classification_predictions_are_class_fractions() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..500 {
            let x1: f64 = rng.gen_range(-2.0..2.0);
            let x2: f64 = rng.gen_range(-2.0..2.0);
            let p = crate::nuisance::logistic::expit(2.0 * x1 - x2);
            ys.push(f64::from(rng.gen_bool(p)));
            xs.push(vec![x1, x2]);
        }
        let fit = fit_forest(
            &xs,
            &ys,
            ForestTask::Classification,
            &ForestHyperParams::default(),
            2,
        )
        .unwrap();
        for x in probe_grid() {
            let pr = fit.predict(&x);
            assert!((0.0..=1.0).contains(&pr), "prediction {pr} outside [0,1]");
        }
        assert!(fit.predict(&[1.5, 0.0]) > fit.predict(&[-1.5, 0.0]));
        let err = fit_forest(&xs, &[0.5; 500], ForestTask::Classification, &Default::default(), 2)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn huge_min_leaf_collapses_trees_to_the_bag_mean() {
        let (xs, ys) = simulate_regression(100, 33);
        let hp = ForestHyperParams { n_trees: 10, min_leaf: 100, ..Default::default() };
        let fit = fit_forest(&xs, &ys, ForestTask::Regression, &hp, 4).unwrap();
        let first = fit.predict(&probe_grid()[0]);
        for x in probe_grid() {
            assert_abs_diff_eq!(fit.predict(&x), first, epsilon = 0.0);
        }
        let overall = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!((first - overall).abs() < 0.3, "stump mean {first} far from {overall}");
    }

    #[test]
    fn max_depth_zero_is_a_single_leaf() {
        let (xs, ys) = simulate_regression(80, 44);
        let hp = ForestHyperParams { n_trees: 5, max_depth: Some(0), ..Default::default() };
        let fit = fit_forest(&xs, &ys, ForestTask::Regression, &hp, 4).unwrap();
        assert_eq!(fit.predict(&[9.0, 9.0]), fit.predict(&[-9.0, -9.0]));
    }
}
