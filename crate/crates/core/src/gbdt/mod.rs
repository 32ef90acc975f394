//! uMart: gradient-boosted regression trees driven by the listwise structure,
//! with pairwise terms weighted by the NDCG change factor and sigma-scaled
//! softmax shares. With window size 1 the gradients reduce to LambdaMart's
//! pairwise lambdas.

pub mod tree;

pub use tree::{
    fit_tree, BinnedMatrix, FeatureBinner, RegressionTree, TreeEnsembleModel, TreeGrowConfig,
    TreeNode, HESSIAN_FLOOR,
};

use crate::data::{partition_unique_ratings, Dataset, RatingPartition};
use crate::error::{LtrError, Result};
use crate::loss::{loss_vectorized, make_windows};
use crate::metrics::{ideal_dcg_at_k, rank_by_score};
use crate::mlp::{selection_key, EpochRecord, SelectionKey, TrainingLog};

/// Per-document first and second derivative accumulators.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LambdaPair {
    pub grad: f64,
    pub hess: f64,
}

/// Shape of the second-derivative accumulation.
///
/// `AsPrinted` follows the published expression, whose two sums are
/// asymmetric: the higher document of a pair accumulates 2 sigma^2 dz p and
/// the lower document subtracts 2 sigma^2 dz p (1 - p). `Symmetric` uses
/// 2 sigma^2 dz p (1 - p) added to both endpoints, the standard curvature of
/// the pairwise cross-entropy; exposed to measure sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessianForm {
    #[default]
    AsPrinted,
    Symmetric,
}

impl HessianForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(HessianForm::AsPrinted),
            "symmetric" => Ok(HessianForm::Symmetric),
            other => Err(LtrError::validation(format!(
                "unknown hessian form `{other}` (expected `as-printed` or `symmetric`)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HessianForm::AsPrinted => "as-printed",
            HessianForm::Symmetric => "symmetric",
        }
    }
}

/// Per-query state for the NDCG change factor: current positions under the
/// ensemble scores, their log discounts, and the full-query ideal DCG.
#[derive(Debug, Clone)]
pub struct DeltaZContext {
    gains: Vec<f64>,
    discounts: Vec<f64>,
    scores: Vec<f64>,
    idcg: f64,
    pub sigma: f64,
    /// Floor on |F(d) - F(d')|; round 0 has all scores equal.
    pub score_gap_floor: f64,
}

impl DeltaZContext {
    pub fn new(ratings: &[u32], scores: &[f64], sigma: f64) -> Self {
        assert_eq!(ratings.len(), scores.len(), "ratings/scores length mismatch");
        let mut discounts = vec![0.0; scores.len()];
        for (position, &doc) in rank_by_score(scores).iter().enumerate() {
            discounts[doc] = 1.0 / ((position + 2) as f64).log2();
        }
        DeltaZContext {
            gains: ratings.iter().map(|&r| (r as f64).exp2()).collect(),
            discounts,
            scores: scores.to_vec(),
            idcg: ideal_dcg_at_k(ratings, ratings.len()),
            sigma,
            score_gap_floor: 1e-12,
        }
    }

    pub fn idcg(&self) -> f64 {
        self.idcg
    }
}

/// |(2^r(d) - 2^r(d')) (discount(d) - discount(d'))| / (|F(d) - F(d')| IDCG),
/// with the score gap floored. Symmetric in its arguments.
pub fn delta_z(d: usize, d2: usize, ctx: &DeltaZContext) -> f64 {
    debug_assert!(
        ctx.gains[d] != ctx.gains[d2],
        "delta_z requires documents at different rating levels"
    );
    debug_assert!(ctx.idcg > 0.0, "delta_z requires a trainable query");
    let gain_diff = ctx.gains[d] - ctx.gains[d2];
    let discount_diff = ctx.discounts[d] - ctx.discounts[d2];
    let gap = (ctx.scores[d] - ctx.scores[d2]).abs().max(ctx.score_gap_floor);
    (gain_diff * discount_diff / (gap * ctx.idcg)).abs()
}

/// Gradient/Hessian pairs for one query under the current ensemble scores.
///
/// Every loss-bearing level pairs its documents against score-sorted windows
/// of the strictly-lower set (the full set when `window` is `None`). Each
/// (higher d, lower d') pair with softmax share p = e^{sigma F(d')} over the
/// {d} + window denominator contributes sigma dz p downward to d's gradient
/// and the same amount upward to d's lower partner, so a document due to rise
/// ends with negative gradient. Hessians follow `form`; they are floored only
/// later, at tree-fitting time.
pub fn umart_gradients(
    partition: &RatingPartition,
    scores: &[f64],
    window: Option<usize>,
    ctx: &DeltaZContext,
    form: HessianForm,
) -> Vec<LambdaPair> {
    let mut pairs = vec![LambdaPair::default(); scores.len()];
    let sigma = ctx.sigma;
    for step in &partition.steps[..partition.num_steps()] {
        let score_of = |i: usize| scores[i];
        let windows = make_windows(&step.lower_docs, &score_of, window);
        for &d in &step.level_docs {
            let fd = sigma * scores[d];
            for w in &windows {
                let mut m = fd;
                for &j in w {
                    m = m.max(sigma * scores[j]);
                }
                let mut denom = (fd - m).exp();
                for &j in w {
                    denom += (sigma * scores[j] - m).exp();
                }
                for &j in w {
                    let share = (sigma * scores[j] - m).exp() / denom;
                    let dz = delta_z(d, j, ctx);
                    let lambda = sigma * dz * share;
                    pairs[d].grad -= lambda;
                    pairs[j].grad += lambda;
                    let curvature = 2.0 * sigma * sigma * dz;
                    match form {
                        HessianForm::AsPrinted => {
                            pairs[d].hess += curvature * share;
                            pairs[j].hess -= curvature * share * (1.0 - share);
                        }
                        HessianForm::Symmetric => {
                            let c = curvature * share * (1.0 - share);
                            pairs[d].hess += c;
                            pairs[j].hess += c;
                        }
                    }
                }
            }
        }
    }
    pairs
}

/// uMart hyperparameters.
#[derive(Debug, Clone)]
pub struct TreeBoostConfig {
    pub num_trees: usize,
    pub max_leaves: usize,
    pub min_leaf: usize,
    pub lambda: f64,
    pub shrinkage: f64,
    pub sigma: f64,
    pub window: Option<usize>,
    pub hessian_form: HessianForm,
    pub max_bins: usize,
    pub ndcg_cutoffs: Vec<usize>,
    pub selection_tolerance: f64,
}

impl Default for TreeBoostConfig {
    fn default() -> Self {
        TreeBoostConfig {
            num_trees: 200,
            max_leaves: 31,
            min_leaf: 20,
            lambda: 1e-3,
            shrinkage: 0.05,
            sigma: 2.0,
            window: None,
            hessian_form: HessianForm::default(),
            max_bins: 255,
            ndcg_cutoffs: vec![1, 3, 5, 10],
            selection_tolerance: 1e-6,
        }
    }
}

/// Trains a tree ensemble: each round computes per-query gradient pairs under
/// the current scores, fits one histogram tree on the pooled pairs, and
/// appends it with shrinkage. The validation [`SelectionKey`] tracks the best
/// round (round 0 is the empty model) and the returned ensemble is truncated
/// to it. The log records the mean training loss per round.
pub fn umart_train(
    train: &Dataset,
    valid: &Dataset,
    config: &TreeBoostConfig,
) -> Result<(TreeEnsembleModel, TrainingLog)> {
    struct QuerySpan {
        start: usize,
        ratings: Vec<u32>,
        partition: RatingPartition,
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut spans: Vec<QuerySpan> = Vec::new();
    for group in &train.queries {
        let partition = partition_unique_ratings(group);
        if partition.num_levels() <= 1 {
            continue;
        }
        let start = rows.len();
        for doc in &group.documents {
            rows.push(doc.features.clone());
        }
        spans.push(QuerySpan {
            start,
            ratings: group.ratings(),
            partition,
        });
    }
    if spans.is_empty() {
        return Err(LtrError::validation(
            "no trainable queries: every query has a single rating level",
        ));
    }

    let binner = FeatureBinner::fit(&rows, config.max_bins);
    let binned = binner.bin_rows(&rows);
    let grow = TreeGrowConfig {
        max_leaves: config.max_leaves,
        min_leaf: config.min_leaf,
        lambda: config.lambda,
    };

    let valid_features: Vec<Vec<Vec<f64>>> = valid
        .queries
        .iter()
        .map(|q| q.documents.iter().map(|d| d.features.clone()).collect())
        .collect();
    let mut valid_scores: Vec<Vec<f64>> = valid.queries.iter().map(|q| vec![0.0; q.len()]).collect();

    let mut model = TreeEnsembleModel {
        trees: Vec::new(),
        shrinkage: config.shrinkage,
    };
    let mut train_scores = vec![0.0; rows.len()];
    let mut grads = vec![0.0; rows.len()];
    let mut hess = vec![0.0; rows.len()];

    let key_of = |scores: &[Vec<f64>]| -> Result<SelectionKey> {
        let mut it = scores.iter();
        selection_key(valid, |_| it.next().expect("aligned scores").clone(), &config.ndcg_cutoffs)
    };
    let mut best_key = key_of(&valid_scores)?;
    let mut best_round = 0usize;
    let mut log = TrainingLog::default();

    for round in 1..=config.num_trees {
        let mut loss_sum = 0.0;
        for span in &spans {
            let slice = &train_scores[span.start..span.start + span.ratings.len()];
            let ctx = DeltaZContext::new(&span.ratings, slice, config.sigma);
            let pairs = umart_gradients(&span.partition, slice, config.window, &ctx, config.hessian_form);
            for (offset, pair) in pairs.iter().enumerate() {
                grads[span.start + offset] = pair.grad;
                hess[span.start + offset] = pair.hess;
            }
            loss_sum += loss_vectorized(&span.ratings, slice);
        }
        let tree = fit_tree(&binned, &binner, &grads, &hess, &grow);
        for (i, row) in rows.iter().enumerate() {
            train_scores[i] += config.shrinkage * tree.predict(row);
        }
        for (qi, feats) in valid_features.iter().enumerate() {
            for (di, row) in feats.iter().enumerate() {
                valid_scores[qi][di] += config.shrinkage * tree.predict(row);
            }
        }
        model.trees.push(tree);

        let key = key_of(&valid_scores)?;
        log.records.push(EpochRecord {
            epoch: round,
            train_loss: loss_sum / spans.len() as f64,
            validation_ndcg: key.0.clone(),
        });
        if key.improves_over(&best_key, config.selection_tolerance) {
            best_key = key;
            best_round = round;
        }
    }
    model.trees.truncate(best_round);
    log.best_epoch = best_round;
    Ok((model, log))
}
