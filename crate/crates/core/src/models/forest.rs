use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ForestConfig;
use crate::seed::derive_seed;

/// Node of a fitted tree. Rows with `row[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        positive_fraction: f64,
        /// Training rows (with bootstrap multiplicity) that reached the leaf.
        weight: u64,
    },
}

/// A CART tree stored as a flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
                TreeNode::Leaf {
                    positive_fraction, ..
                } => return positive_fraction,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub width: usize,
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    /// Fits `config.tree_count` trees; tree `t` draws from its own seeded
    /// stream, so the result does not depend on the thread count.
    pub fn fit(
        rows: &[f64],
        labels: &[bool],
        width: usize,
        config: &ForestConfig,
        seed: u64,
    ) -> Forest {
        assert_eq!(rows.len(), labels.len() * width, "rows and labels disagree");
        assert!(!labels.is_empty(), "cannot fit a forest on no rows");
        let trees = (0..config.tree_count)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("tree/{t}")));
                fit_tree(rows, labels, width, config, &mut rng)
            })
            .collect();
        Forest { width, trees }
    }

    /// Mean over trees of the positive fraction in the row's leaf.
    pub fn score(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaf_value(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Clone, Copy)]
struct Sample {
    row: usize,
    weight: u64,
}

struct Builder<'a, R> {
    rows: &'a [f64],
    labels: &'a [bool],
    width: usize,
    max_depth: usize,
    min_leaf: u64,
    candidates: usize,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, u64, u64)>,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini_mass(weight: u64, positive: u64) -> f64 {
    // weight * gini impurity = 2 p n / w
    2.0 * positive as f64 * (weight - positive) as f64 / weight as f64
}

fn fit_tree<R: Rng>(
    rows: &[f64],
    labels: &[bool],
    width: usize,
    config: &ForestConfig,
    rng: &mut R,
) -> DecisionTree {
    let n = labels.len();
    let mut samples: Vec<Sample> = if config.bootstrap {
        let mut counts = vec![0u64; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(row, &weight)| Sample { row, weight })
            .collect()
    } else {
        (0..n).map(|row| Sample { row, weight: 1 }).collect()
    };
    let candidates = config
        .features_per_split
        .unwrap_or_else(|| (width as f64).sqrt().ceil() as usize)
        .clamp(1, width);
    let mut builder = Builder {
        rows,
        labels,
        width,
        max_depth: config.max_depth,
        min_leaf: config.min_leaf as u64,
        candidates,
        rng,
        nodes: Vec::new(),
        scratch: Vec::new(),
    };
    builder.grow(&mut samples, 0);
    DecisionTree {
        nodes: builder.nodes,
    }
}

impl<R: Rng> Builder<'_, R> {
    fn value(&self, s: Sample, feature: usize) -> f64 {
        self.rows[s.row * self.width + feature]
    }

    fn grow(&mut self, samples: &mut [Sample], depth: usize) -> usize {
        let weight: u64 = samples.iter().map(|s| s.weight).sum();
        let positive: u64 = samples
            .iter()
            .filter(|s| self.labels[s.row])
            .map(|s| s.weight)
            .sum();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            positive_fraction: positive as f64 / weight as f64,
            weight,
        });

        let pure = positive == 0 || positive == weight;
        if pure || depth >= self.max_depth || weight < 2 * self.min_leaf {
            return id;
        }
        let Some(split) = self.best_split(samples) else {
            return id;
        };

        let mut cut = 0;
        for i in 0..samples.len() {
            if self.value(samples[i], split.feature) <= split.threshold {
                samples.swap(i, cut);
                cut += 1;
            }
        }
        let (left_samples, right_samples) = samples.split_at_mut(cut);
        let left = self.grow(left_samples, depth + 1);
        let right = self.grow(right_samples, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Lowest weighted Gini over `candidates` random features; if none of
    /// them can be split, the remaining features are tried in random order.
    fn best_split(&mut self, samples: &[Sample]) -> Option<Split> {
        let mut features: Vec<usize> = (0..self.width).collect();
        features.shuffle(self.rng);
        let mut best: Option<Split> = None;
        for (k, &feature) in features.iter().enumerate() {
            if k >= self.candidates && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(samples, feature) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn best_split_on(&mut self, samples: &[Sample], feature: usize) -> Option<Split> {
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        scratch.extend(samples.iter().map(|&s| {
            let pos = if self.labels[s.row] { s.weight } else { 0 };
            (self.value(s, feature), s.weight, pos)
        }));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let total: u64 = scratch.iter().map(|e| e.1).sum();
        let total_pos: u64 = scratch.iter().map(|e| e.2).sum();
        let (mut wl, mut pl) = (0u64, 0u64);
        let mut best: Option<Split> = None;
        for i in 0..scratch.len() - 1 {
            wl += scratch[i].1;
            pl += scratch[i].2;
            let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
            if lo == hi {
                continue;
            }
            let wr = total - wl;
            if wl < self.min_leaf || wr < self.min_leaf {
                continue;
            }
            let impurity = gini_mass(wl, pl) + gini_mass(wr, total_pos - pl);
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mid = lo + (hi - lo) / 2.0;
                // adjacent floats: the midpoint may round up onto `hi`
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Split {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
        self.scratch = scratch;
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_bootstrap(depth: usize, min_leaf: usize) -> ForestConfig {
        ForestConfig {
            tree_count: 1,
            max_depth: depth,
            min_leaf,
            features_per_split: None,
            bootstrap: false,
        }
    }

    #[test]
    fn stump_splits_at_best_gini_midpoint() {
        // labels 0 0 1 0 1 1: best single split is between 2 and 3 or 4 and 5
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [false, false, true, false, true, true];
        let f = Forest::fit(&x, &y, 1, &no_bootstrap(1, 1), 0);
        let tree = &f.trees[0];
        match tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, 2.5),
            ref other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(f.score(&[0.0]), 0.0);
        assert_eq!(f.score(&[10.0]), 0.75);
    }

    #[test]
    fn pure_node_becomes_leaf() {
        let f = Forest::fit(&[1.0, 2.0, 3.0], &[true; 3], 1, &no_bootstrap(16, 1), 0);
        assert_eq!(f.trees[0].nodes.len(), 1);
        assert_eq!(f.score(&[5.0]), 1.0);
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [true, false, false, false];
        let f = Forest::fit(&x, &y, 1, &no_bootstrap(4, 2), 0);
        for node in &f.trees[0].nodes {
            if let TreeNode::Leaf { weight, .. } = node {
                assert!(*weight >= 2);
            }
        }
    }

    #[test]
    fn constant_features_fall_back_to_informative_ones() {
        // feature 0 constant, feature 1 separates; one candidate per split
        let rows = [0.0, 1.0, 0.0, 2.0, 0.0, 8.0, 0.0, 9.0];
        let y = [false, false, true, true];
        let mut cfg = no_bootstrap(2, 1);
        cfg.features_per_split = Some(1);
        for seed in 0..8 {
            let f = Forest::fit(&rows, &y, 2, &cfg, seed);
            assert_eq!(f.score(&[0.0, 1.5]), 0.0);
            assert_eq!(f.score(&[0.0, 8.5]), 1.0);
        }
    }
}
