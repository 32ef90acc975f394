//! Histogram-based regression trees fit to per-document gradient and Hessian
//! pairs with Newton-style split gains, plus the boosted ensemble container.

use serde::{Deserialize, Serialize};

/// Per-document Hessians are floored here before any split or leaf division.
pub const HESSIAN_FLOOR: f64 = 1e-16;

/// Splits with gain below this threshold are not worth taking.
const MIN_SPLIT_GAIN: f64 = 1e-12;

/// Per-feature split thresholds from equal-frequency binning. A value's bin
/// is the count of thresholds strictly below it, so bin b covers the half-open
/// interval (threshold[b-1], threshold[b]].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBinner {
    boundaries: Vec<Vec<f64>>,
}

impl FeatureBinner {
    /// Chooses up to `max_bins - 1` boundaries per feature at equal-frequency
    /// ranks, each placed at the midpoint of adjacent distinct values.
    pub fn fit(rows: &[Vec<f64>], max_bins: usize) -> Self {
        assert!(max_bins >= 2, "need at least two bins");
        let cols = rows.first().map_or(0, |r| r.len());
        let n = rows.len();
        let mut boundaries = Vec::with_capacity(cols);
        for j in 0..cols {
            let mut column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            column.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut distinct_gaps: Vec<f64> = column
                .windows(2)
                .filter(|w| w[1] > w[0])
                .map(|w| 0.5 * (w[0] + w[1]))
                .collect();
            distinct_gaps.dedup();
            let feature_bounds = if distinct_gaps.len() < max_bins {
                distinct_gaps
            } else {
                let mut picked = Vec::with_capacity(max_bins - 1);
                for b in 1..max_bins {
                    let pos = b * n / max_bins;
                    if pos == 0 || pos >= n {
                        continue;
                    }
                    let (lo, hi) = (column[pos - 1], column[pos]);
                    if hi > lo {
                        let mid = 0.5 * (lo + hi);
                        if picked.last() != Some(&mid) {
                            picked.push(mid);
                        }
                    }
                }
                picked
            };
            boundaries.push(feature_bounds);
        }
        FeatureBinner { boundaries }
    }

    pub fn feature_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Bin index of `x` for feature `j`: boundaries strictly below `x`.
    pub fn bin(&self, j: usize, x: f64) -> usize {
        self.boundaries[j].partition_point(|b| *b < x)
    }

    pub fn num_bins(&self, j: usize) -> usize {
        self.boundaries[j].len() + 1
    }

    /// The raw threshold separating bins `<= s` from bins `> s`.
    pub fn boundary(&self, j: usize, s: usize) -> f64 {
        self.boundaries[j][s]
    }

    /// Row-major binned copy of the data.
    pub fn bin_rows(&self, rows: &[Vec<f64>]) -> BinnedMatrix {
        let cols = self.feature_count();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "row width mismatch");
            for (j, &x) in row.iter().enumerate() {
                data.push(self.bin(j, x) as u16);
            }
        }
        BinnedMatrix {
            data,
            rows: rows.len(),
            cols,
        }
    }
}

/// Dense row-major bin indices for the training rows.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    data: Vec<u16>,
    rows: usize,
    cols: usize,
}

impl BinnedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> usize {
        self.data[row * self.cols + col] as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        /// Rows with feature value <= threshold go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// A fitted binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if features[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeGrowConfig {
    pub max_leaves: usize,
    pub min_leaf: usize,
    /// L2 regularization on leaf values.
    pub lambda: f64,
}

struct GrowLeaf {
    rows: Vec<u32>,
    sum_g: f64,
    sum_h: f64,
    /// Best split found for this leaf, if any: (gain, feature, bin).
    best: Option<(f64, usize, usize)>,
}

/// Greedy best-first growth: repeatedly split the leaf with the highest
/// Newton gain G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l) until `max_leaves`
/// is reached or no leaf has a positive-gain split honoring `min_leaf`.
/// Degenerate inputs (constant features, zero gradients) give a single leaf.
pub fn fit_tree(
    binned: &BinnedMatrix,
    binner: &FeatureBinner,
    grads: &[f64],
    hess: &[f64],
    config: &TreeGrowConfig,
) -> RegressionTree {
    assert_eq!(binned.rows(), grads.len(), "gradient count mismatch");
    assert_eq!(grads.len(), hess.len(), "hessian count mismatch");
    let hess: Vec<f64> = hess.iter().map(|&h| h.max(HESSIAN_FLOOR)).collect();

    let ctx = SplitContext {
        binned,
        binner,
        grads,
        hess: &hess,
        config,
    };
    let all_rows: Vec<u32> = (0..binned.rows() as u32).collect();
    let sum_g: f64 = grads.iter().sum();
    let sum_h: f64 = hess.iter().sum();
    let root_best = find_best_split(&ctx, &all_rows, sum_g, sum_h);
    let mut leaves = vec![GrowLeaf {
        rows: all_rows,
        sum_g,
        sum_h,
        best: root_best,
    }];
    // (leaf slot that was split, feature, bin, left child slot, right child slot)
    let mut splits: Vec<(usize, usize, usize, usize, usize)> = Vec::new();
    let mut live: Vec<usize> = vec![0];

    while live.len() < config.max_leaves {
        let Some((pick_pos, gain)) = live
            .iter()
            .enumerate()
            .filter_map(|(pos, &slot)| leaves[slot].best.map(|(g, _, _)| (pos, g)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        else {
            break;
        };
        if gain <= MIN_SPLIT_GAIN {
            break;
        }
        let slot = live[pick_pos];
        let (_, feature, bin) = leaves[slot].best.unwrap();
        let rows = std::mem::take(&mut leaves[slot].rows);
        let (mut lrows, mut rrows) = (Vec::new(), Vec::new());
        for &r in &rows {
            if binned.at(r as usize, feature) <= bin {
                lrows.push(r);
            } else {
                rrows.push(r);
            }
        }
        let (lg, lh) = sums(&lrows, grads, &hess);
        let (rg, rh) = (leaves[slot].sum_g - lg, leaves[slot].sum_h - lh);
        let lbest = find_best_split(&ctx, &lrows, lg, lh);
        let rbest = find_best_split(&ctx, &rrows, rg, rh);
        let lslot = leaves.len();
        leaves.push(GrowLeaf { rows: lrows, sum_g: lg, sum_h: lh, best: lbest });
        let rslot = leaves.len();
        leaves.push(GrowLeaf { rows: rrows, sum_g: rg, sum_h: rh, best: rbest });
        splits.push((slot, feature, bin, lslot, rslot));
        live.remove(pick_pos);
        live.push(lslot);
        live.push(rslot);
    }

    freeze(&leaves, &splits, binner, config.lambda)
}

fn sums(rows: &[u32], grads: &[f64], hess: &[f64]) -> (f64, f64) {
    let mut g = 0.0;
    let mut h = 0.0;
    for &r in rows {
        g += grads[r as usize];
        h += hess[r as usize];
    }
    (g, h)
}

/// Everything that stays fixed while one tree grows.
struct SplitContext<'a> {
    binned: &'a BinnedMatrix,
    binner: &'a FeatureBinner,
    grads: &'a [f64],
    hess: &'a [f64],
    config: &'a TreeGrowConfig,
}

fn find_best_split(
    ctx: &SplitContext<'_>,
    rows: &[u32],
    sum_g: f64,
    sum_h: f64,
) -> Option<(f64, usize, usize)> {
    let SplitContext {
        binned,
        binner,
        grads,
        hess,
        config,
    } = *ctx;
    if rows.len() < 2 * config.min_leaf {
        return None;
    }
    let lambda = config.lambda;
    let parent_score = sum_g * sum_g / (sum_h + lambda);
    let mut best: Option<(f64, usize, usize)> = None;
    for feature in 0..binner.feature_count() {
        let bins = binner.num_bins(feature);
        if bins < 2 {
            continue;
        }
        let mut hist_g = vec![0.0f64; bins];
        let mut hist_h = vec![0.0f64; bins];
        let mut hist_n = vec![0usize; bins];
        for &r in rows {
            let b = binned.at(r as usize, feature);
            hist_g[b] += grads[r as usize];
            hist_h[b] += hess[r as usize];
            hist_n[b] += 1;
        }
        let mut left_g = 0.0;
        let mut left_h = 0.0;
        let mut left_n = 0usize;
        for split_bin in 0..bins - 1 {
            left_g += hist_g[split_bin];
            left_h += hist_h[split_bin];
            left_n += hist_n[split_bin];
            let right_n = rows.len() - left_n;
            if left_n < config.min_leaf || right_n < config.min_leaf {
                continue;
            }
            let right_g = sum_g - left_g;
            let right_h = sum_h - left_h;
            let gain = left_g * left_g / (left_h + lambda)
                + right_g * right_g / (right_h + lambda)
                - parent_score;
            if best.is_none_or(|(bg, _, _)| gain > bg) {
                best = Some((gain, feature, split_bin));
            }
        }
    }
    best.filter(|&(gain, _, _)| gain > MIN_SPLIT_GAIN)
}

fn freeze(
    leaves: &[GrowLeaf],
    splits: &[(usize, usize, usize, usize, usize)],
    binner: &FeatureBinner,
    lambda: f64,
) -> RegressionTree {
    // Map each grow-slot to its split record, if it was split.
    let mut split_of = vec![None; leaves.len()];
    for &(slot, feature, bin, l, r) in splits {
        split_of[slot] = Some((feature, bin, l, r));
    }
    let mut nodes = Vec::new();
    emit(0, leaves, &split_of, binner, lambda, &mut nodes);
    RegressionTree { nodes }
}

fn emit(
    slot: usize,
    leaves: &[GrowLeaf],
    split_of: &[Option<(usize, usize, usize, usize)>],
    binner: &FeatureBinner,
    lambda: f64,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let id = nodes.len();
    match split_of[slot] {
        Some((feature, bin, lslot, rslot)) => {
            nodes.push(TreeNode::Split {
                feature,
                threshold: binner.boundary(feature, bin),
                left: 0,
                right: 0,
            });
            let left = emit(lslot, leaves, split_of, binner, lambda, nodes);
            let right = emit(rslot, leaves, split_of, binner, lambda, nodes);
            if let TreeNode::Split { left: l, right: r, .. } = &mut nodes[id] {
                *l = left;
                *r = right;
            }
        }
        None => {
            let leaf = &leaves[slot];
            let value = if leaf.sum_g == 0.0 {
                0.0
            } else {
                -leaf.sum_g / (leaf.sum_h + lambda)
            };
            assert!(value.is_finite(), "leaf value must be finite");
            nodes.push(TreeNode::Leaf { value });
        }
    }
    id
}

/// An ordered list of shrunken trees: prediction is shrinkage times the sum
/// of per-tree outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub trees: Vec<RegressionTree>,
    pub shrinkage: f64,
}

impl TreeEnsembleModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|t| self.shrinkage * t.predict(features))
            .sum()
    }
}
