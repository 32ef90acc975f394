//! The uRank scorer: a bias-free three-matrix MLP with ELU activations,
//! manual backpropagation, and the listwise training loop with lexicographic
//! validation selection.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{partition_unique_ratings, Dataset, QueryGroup, RatingPartition};
use crate::error::{LtrError, Result};
use crate::loss::{loss, residuals, LossConfig};
use crate::metrics::{evaluate, EvalConfig, ZeroLabelPolicy};
use crate::optim::{
    adam_step, clip_global_norm, glorot_uniform, AdamState, ParamTensors,
};

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn elu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Bias-free scorer weights: chained products l -> k1 -> k2 -> 1 with ELU
/// after every product. `activate_output` controls whether the final scalar
/// layer is ELU-activated too (the literal composition) or left linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MLPParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub w3: Array2<f64>,
    pub activate_output: bool,
}

impl MLPParams {
    pub fn glorot(
        feature_count: usize,
        hidden_dims: (usize, usize),
        activate_output: bool,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let (k1, k2) = hidden_dims;
        MLPParams {
            w1: glorot_uniform(feature_count, k1, rng),
            w2: glorot_uniform(k1, k2, rng),
            w3: glorot_uniform(k2, 1, rng),
            activate_output,
        }
    }

    /// A same-shape container of zeros, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        MLPParams {
            w1: Array2::zeros(self.w1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            w3: Array2::zeros(self.w3.raw_dim()),
            activate_output: self.activate_output,
        }
    }

    pub fn feature_count(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dims(&self) -> (usize, usize) {
        (self.w1.ncols(), self.w2.ncols())
    }
}

impl ParamTensors for MLPParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.w3.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.w3.as_slice_mut().unwrap(),
        ]
    }
}

/// Pre-activation and activation values kept from a forward pass for backprop.
pub struct ForwardCache {
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    z3: Array2<f64>,
    pub scores: Vec<f64>,
}

/// Scores `x` (n-by-l), validating the feature dimension.
pub fn mlp_forward(params: &MLPParams, x: &Array2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != params.w1.nrows() {
        return Err(LtrError::validation(format!(
            "feature matrix has {} columns but the scorer expects {}",
            x.ncols(),
            params.w1.nrows()
        )));
    }
    Ok(mlp_forward_cached(params, x).scores)
}

/// Forward pass retaining intermediates. Dimensions must already agree.
pub fn mlp_forward_cached(params: &MLPParams, x: &Array2<f64>) -> ForwardCache {
    assert_eq!(x.ncols(), params.w1.nrows(), "feature dimension mismatch");
    let z1 = x.dot(&params.w1);
    let a1 = z1.mapv(elu);
    let z2 = a1.dot(&params.w2);
    let a2 = z2.mapv(elu);
    let z3 = a2.dot(&params.w3);
    let scores = z3
        .index_axis(Axis(1), 0)
        .iter()
        .map(|&v| if params.activate_output { elu(v) } else { v })
        .collect();
    ForwardCache {
        z1,
        a1,
        z2,
        a2,
        z3,
        scores,
    }
}

/// Exact gradients of `upstream . scores` with respect to every weight.
pub fn mlp_backward(
    params: &MLPParams,
    x: &Array2<f64>,
    cache: &ForwardCache,
    upstream: &[f64],
) -> MLPParams {
    let n = x.nrows();
    assert_eq!(upstream.len(), n, "upstream gradient length mismatch");
    let mut d_z3 = Array2::zeros((n, 1));
    for i in 0..n {
        let factor = if params.activate_output {
            elu_prime(cache.z3[[i, 0]])
        } else {
            1.0
        };
        d_z3[[i, 0]] = upstream[i] * factor;
    }
    let d_w3 = cache.a2.t().dot(&d_z3);
    let d_a2 = d_z3.dot(&params.w3.t());
    let d_z2 = &d_a2 * &cache.z2.mapv(elu_prime);
    let d_w2 = cache.a1.t().dot(&d_z2);
    let d_a1 = d_z2.dot(&params.w2.t());
    let d_z1 = &d_a1 * &cache.z1.mapv(elu_prime);
    let d_w1 = x.t().dot(&d_z1);
    MLPParams {
        w1: d_w1,
        w2: d_w2,
        w3: d_w3,
        activate_output: params.activate_output,
    }
}

/// Validation NDCG tuple compared lexicographically with a per-component
/// tolerance: A beats B iff at the first cutoff where they differ by more
/// than the tolerance, A is higher.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionKey(pub Vec<f64>);

impl SelectionKey {
    pub fn improves_over(&self, other: &SelectionKey, tolerance: f64) -> bool {
        for (a, b) in self.0.iter().zip(&other.0) {
            if (a - b).abs() > tolerance {
                return a > b;
            }
        }
        false
    }
}

/// Mean validation NDCG at each cutoff (skip policy), as a [`SelectionKey`].
pub fn selection_key<F>(valid: &Dataset, scorer: F, cutoffs: &[usize]) -> Result<SelectionKey>
where
    F: FnMut(&QueryGroup) -> Vec<f64>,
{
    let config = EvalConfig::new(cutoffs.to_vec(), ZeroLabelPolicy::Skip, valid.max_rating().max(1));
    let report = evaluate(valid, scorer, &config)?;
    Ok(SelectionKey(
        cutoffs.iter().map(|k| report.ndcg[k]).collect(),
    ))
}

/// Hyperparameters shared by the neural trainers (uRank, uBoost, urBoost).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden_dims: (usize, usize),
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop when this many consecutive epochs pass without key improvement.
    pub patience: usize,
    pub grad_clip_norm: f64,
    pub ndcg_cutoffs: Vec<usize>,
    pub selection_tolerance: f64,
    pub seed: u64,
    /// ELU on the final scalar layer (the literal composition) when true.
    pub activate_output: bool,
    /// Loss windowing; `None` uses full strictly-lower sets.
    pub window: Option<usize>,
    /// Boosting: maximum number of weak learners.
    pub max_learners: usize,
    /// urBoost: RNN hidden-state dimension.
    pub rnn_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: (100, 50),
            learning_rate: 1e-4,
            max_epochs: 1000,
            patience: 200,
            grad_clip_norm: 5.0,
            ndcg_cutoffs: vec![1, 3, 5, 10],
            selection_tolerance: 1e-6,
            seed: 42,
            activate_output: true,
            window: None,
            max_learners: 5,
            rnn_hidden: 50,
        }
    }
}

impl TrainConfig {
    /// Dataset-family defaults: feature count selects hidden dims and rate.
    pub fn for_feature_count(feature_count: usize) -> Self {
        let (hidden_dims, learning_rate) = if feature_count <= 45 {
            ((100, 50), 1e-4)
        } else if feature_count <= 60 {
            ((100, 100), 1e-5)
        } else {
            ((200, 200), 1e-5)
        };
        TrainConfig {
            hidden_dims,
            learning_rate,
            ..TrainConfig::default()
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { window: self.window }
    }
}

/// One line of a training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainingLog {
    /// Line-delimited records: epoch, train loss, validation NDCG tuple.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let ndcg: Vec<String> = r.validation_ndcg.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!(
                "epoch={}\ttrain_loss={:.6}\tvalid_ndcg={}\n",
                r.epoch,
                r.train_loss,
                ndcg.join(",")
            ));
        }
        out.push_str(&format!("best_epoch={}\n", self.best_epoch));
        out
    }
}

/// A query prepared for training: features plus its rating partition.
pub(crate) struct PreparedQuery {
    pub features: Array2<f64>,
    pub partition: RatingPartition,
}

/// Queries with more than one rating level, ready for gradient updates.
pub(crate) fn prepare_trainable(train: &Dataset) -> Vec<PreparedQuery> {
    train
        .queries
        .iter()
        .filter_map(|q| {
            let partition = partition_unique_ratings(q);
            (partition.num_levels() > 1).then(|| PreparedQuery {
                features: q.feature_matrix(),
                partition,
            })
        })
        .collect()
}

/// Trains a uRank scorer on the listwise loss.
///
/// Per epoch, queries are visited in a freshly shuffled order; each query is
/// one batch: forward, analytic residuals, backprop of their negation, global
/// clip at `grad_clip_norm`, one Adam step. After every epoch the validation
/// [`SelectionKey`] decides whether the current weights become the kept ones;
/// training stops after `patience` epochs without improvement. Returns the
/// best weights and the full log.
pub fn train_urank(
    train: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
) -> Result<(MLPParams, TrainingLog)> {
    let queries = prepare_trainable(train);
    if queries.is_empty() {
        return Err(LtrError::validation(
            "no trainable queries: every query has a single rating level",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MLPParams::glorot(
        train.feature_count,
        config.hidden_dims,
        config.activate_output,
        &mut rng,
    );
    let mut adam = AdamState::for_params(&params);
    let loss_cfg = config.loss_config();

    let mut log = TrainingLog::default();
    let mut best: Option<(MLPParams, SelectionKey)> = None;
    let mut best_epoch = 0usize;

    let mut order: Vec<usize> = (0..queries.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &qi in &order {
            let q = &queries[qi];
            let cache = mlp_forward_cached(&params, &q.features);
            loss_sum += loss(&q.partition, &cache.scores, &loss_cfg);
            let res = residuals(&q.partition, &cache.scores, &loss_cfg);
            let upstream: Vec<f64> = res.iter().map(|r| -r).collect();
            let mut grads = mlp_backward(&params, &q.features, &cache, &upstream);
            clip_global_norm(&mut grads, config.grad_clip_norm);
            adam_step(&mut params, &grads, &mut adam, config.learning_rate);
        }
        let key = selection_key(
            valid,
            |g| mlp_forward_cached(&params, &g.feature_matrix()).scores,
            &config.ndcg_cutoffs,
        )?;
        log.records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / queries.len() as f64,
            validation_ndcg: key.0.clone(),
        });
        let improved = match &best {
            None => true,
            Some((_, held)) => key.improves_over(held, config.selection_tolerance),
        };
        if improved {
            best = Some((params.clone(), key));
            best_epoch = epoch;
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    log.best_epoch = best_epoch;
    let (best_params, _) = best.expect("at least one epoch ran");
    Ok((best_params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Document;
    use approx::assert_relative_eq;

    #[test]
    fn zero_weights_score_zero() {
        let params = MLPParams {
            w1: Array2::zeros((3, 4)),
            w2: Array2::zeros((4, 2)),
            w3: Array2::zeros((2, 1)),
            activate_output: true,
        };
        let x = Array2::from_shape_vec((2, 3), vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0]).unwrap();
        assert_eq!(mlp_forward(&params, &x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_chain_is_identity_on_positive_input() {
        let params = MLPParams {
            w1: Array2::from_elem((1, 1), 1.0),
            w2: Array2::from_elem((1, 1), 1.0),
            w3: Array2::from_elem((1, 1), 1.0),
            activate_output: true,
        };
        let x = Array2::from_elem((1, 1), 2.0);
        assert_eq!(mlp_forward(&params, &x).unwrap(), vec![2.0]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_naive_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = MLPParams::glorot(4, (3, 2), true, &mut rng);
        let x = glorot_uniform(5, 4, &mut rng);
        let scores = mlp_forward(&params, &x).unwrap();
        // Straightforward per-row loops, no shared matrix helpers.
        for i in 0..5 {
            let mut a1 = [0.0; 3];
            for j in 0..3 {
                let mut z = 0.0;
                for f in 0..4 {
                    z += x[[i, f]] * params.w1[[f, j]];
                }
                a1[j] = elu(z);
            }
            let mut a2 = [0.0; 2];
            for j in 0..2 {
                let mut z = 0.0;
                for f in 0..3 {
                    z += a1[f] * params.w2[[f, j]];
                }
                a2[j] = elu(z);
            }
            let mut z3 = 0.0;
            for f in 0..2 {
                z3 += a2[f] * params.w3[[f, 0]];
            }
            assert_relative_eq!(scores[i], elu(z3), max_relative = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_feature_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = MLPParams::glorot(4, (3, 2), true, &mut rng);
        let x = Array2::zeros((2, 5));
        assert!(mlp_forward(&params, &x).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MLPParams::glorot(3, (4, 2), true, &mut rng);
        let x = glorot_uniform(6, 3, &mut rng);
        let cache = mlp_forward_cached(&params, &x);
        let grads = mlp_backward(&params, &x, &cache, &[0.0; 6]);
        assert!(grads.w1.iter().all(|&v| v == 0.0));
        assert!(grads.w2.iter().all(|&v| v == 0.0));
        assert!(grads.w3.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = MLPParams::glorot(3, (4, 2), false, &mut rng);
        let x = glorot_uniform(4, 3, &mut rng);
        let cache = mlp_forward_cached(&params, &x);
        let upstream = vec![0.3, -0.7, 1.1, 0.2];
        let scaled: Vec<f64> = upstream.iter().map(|u| u * 2.5).collect();
        let g1 = mlp_backward(&params, &x, &cache, &upstream);
        let g2 = mlp_backward(&params, &x, &cache, &scaled);
        for (a, b) in g1.w1.iter().zip(g2.w1.iter()) {
            assert_relative_eq!(*b, a * 2.5, max_relative = 1e-12, epsilon = 1e-15);
        }
        for (a, b) in g1.w3.iter().zip(g2.w3.iter()) {
            assert_relative_eq!(*b, a * 2.5, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    /// Central finite differences of an arbitrary scalar objective through
    /// the forward pass, compared against mlp_backward for every weight.
    #[test]
    fn backward_matches_finite_differences() {
        for activate_output in [true, false] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut params = MLPParams::glorot(5, (4, 3), activate_output, &mut rng);
            let x = glorot_uniform(6, 5, &mut rng);
            let ratings = [2u32, 0, 1, 4, 0, 1];
            let partition = RatingPartition::from_ratings(&ratings);
            let cfg = LossConfig::unwindowed();

            let cache = mlp_forward_cached(&params, &x);
            let res = residuals(&partition, &cache.scores, &cfg);
            let upstream: Vec<f64> = res.iter().map(|r| -r).collect();
            let grads = mlp_backward(&params, &x, &cache, &upstream);

            let h = 1e-6;
            for t in 0..3 {
                for i in 0..params.tensors()[t].len() {
                    let orig = params.tensors()[t][i];
                    params.tensors_mut()[t][i] = orig + h;
                    let up = loss(&partition, &mlp_forward_cached(&params, &x).scores, &cfg);
                    params.tensors_mut()[t][i] = orig - h;
                    let down = loss(&partition, &mlp_forward_cached(&params, &x).scores, &cfg);
                    params.tensors_mut()[t][i] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let analytic = grads.tensors()[t][i];
                    let scale = fd.abs().max(analytic.abs());
                    assert!(
                        (fd - analytic).abs() <= 1e-4 * scale.max(1e-3),
                        "tensor {t} weight {i}: fd {fd} vs analytic {analytic}"
                    );
                }
            }
        }
    }

    #[test]
    fn selection_key_is_lexicographic_with_tolerance() {
        let a = SelectionKey(vec![0.5, 0.4, 0.3, 0.2]);
        let b = SelectionKey(vec![0.5, 0.4, 0.3, 0.2]);
        assert!(!a.improves_over(&b, 1e-6));
        // First component within tolerance, second decisively higher.
        let c = SelectionKey(vec![0.5 + 5e-7, 0.5, 0.3, 0.2]);
        assert!(c.improves_over(&a, 1e-6));
        // First component decisively higher trumps later losses.
        let d = SelectionKey(vec![0.51, 0.0, 0.0, 0.0]);
        assert!(d.improves_over(&a, 1e-6));
        assert!(!a.improves_over(&d, 1e-6));
        // Differences all within tolerance: no improvement either way.
        let e = SelectionKey(vec![0.5 + 9e-7, 0.4 - 9e-7, 0.3, 0.2]);
        assert!(!e.improves_over(&a, 1e-6));
    }

    fn separable_dataset(queries: usize, docs: usize) -> Dataset {
        // Feature 1 equals the rating; feature 2 is an index-based distractor.
        let mut qs = Vec::new();
        for q in 0..queries {
            let documents = (0..docs)
                .map(|i| {
                    let rating = ((i + q) % 3) as u32;
                    Document {
                        rating,
                        features: vec![rating as f64, (i as f64) / docs as f64],
                    }
                })
                .collect();
            qs.push(QueryGroup {
                query_id: format!("q{q}"),
                documents,
            });
        }
        Dataset {
            queries: qs,
            feature_count: 2,
        }
    }

    #[test]
    fn train_urank_errors_on_untrainable_data() {
        let flat = Dataset {
            queries: vec![QueryGroup {
                query_id: "q".into(),
                documents: vec![
                    Document { rating: 1, features: vec![0.0] },
                    Document { rating: 1, features: vec![1.0] },
                ],
            }],
            feature_count: 1,
        };
        assert!(train_urank(&flat, &flat, &TrainConfig::default()).is_err());
    }

    #[test]
    fn train_urank_patience_zero_runs_exactly_one_epoch() {
        let ds = separable_dataset(4, 6);
        let config = TrainConfig {
            hidden_dims: (4, 3),
            patience: 0,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (_, log) = train_urank(&ds, &ds, &config).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.best_epoch, 1);
    }

    #[test]
    fn train_urank_is_deterministic_per_seed() {
        let ds = separable_dataset(5, 8);
        let config = TrainConfig {
            hidden_dims: (6, 4),
            max_epochs: 5,
            patience: 5,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let (p1, log1) = train_urank(&ds, &ds, &config).unwrap();
        let (p2, log2) = train_urank(&ds, &ds, &config).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(log1.to_lines(), log2.to_lines());
        let (p3, _) = train_urank(&ds, &ds, &TrainConfig { seed: 43, ..config }).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn train_urank_loss_mostly_decreases_early() {
        let ds = separable_dataset(6, 10);
        let config = TrainConfig {
            hidden_dims: (8, 4),
            max_epochs: 50,
            patience: 50,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let (_, log) = train_urank(&ds, &ds, &config).unwrap();
        let losses: Vec<f64> = log.records.iter().map(|r| r.train_loss).collect();
        let decreasing = losses
            .windows(2)
            .filter(|w| w[1] <= w[0] + 1e-12)
            .count();
        assert!(
            decreasing * 10 >= (losses.len() - 1) * 9,
            "loss decreased in only {decreasing}/{} epoch transitions",
            losses.len() - 1
        );
    }
}
