//! Boosted ensembles of neural weak learners.
//!
//! uBoost stacks feed-forward scorers; urBoost stacks RNN-conditional
//! scorers. Both follow the same protocol: learner 1 minimizes the listwise
//! loss directly, every later learner is trained with MSE against the
//! residual targets of the current ensemble, and a completed learner joins
//! the ensemble only if it improves the validation selection key. Ensemble
//! coefficients are fixed at 1, so the combined score is a plain sum.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, QueryGroup};
use crate::error::{LtrError, Result};
use crate::loss::{conditional_loss, residuals, step_gradients, LossConfig};
use crate::mlp::{
    mlp_backward, mlp_forward_cached, prepare_trainable, selection_key, train_urank, EpochRecord,
    MLPParams, PreparedQuery, SelectionKey, TrainConfig, TrainingLog,
};
use crate::optim::{adam_step, clip_global_norm, AdamState};
use crate::rnn::{rnn_backward, rnn_first_step_scores, rnn_forward, RnnScorerParams};

/// Hard cap on ensemble size.
pub const MAX_LEARNERS: usize = 5;

/// One member of a boosted ensemble.
#[derive(Debug, Clone)]
pub enum WeakLearner {
    Mlp(MLPParams),
    Rnn(RnnScorerParams),
}

impl WeakLearner {
    /// Inference scores for a feature matrix. RNN learners score every
    /// document at the first step, from the zero state.
    pub fn score(&self, x: &Array2<f64>) -> Vec<f64> {
        match self {
            WeakLearner::Mlp(p) => mlp_forward_cached(p, x).scores,
            WeakLearner::Rnn(p) => rnn_first_step_scores(p, x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WeakLearner::Mlp(_) => "mlp",
            WeakLearner::Rnn(_) => "rnn",
        }
    }
}

/// An additive ensemble of 1 to [`MAX_LEARNERS`] weak learners with unit
/// coefficients.
#[derive(Debug, Clone)]
pub struct NeuralEnsemble {
    pub learners: Vec<WeakLearner>,
    pub coefficients: Vec<f64>,
}

impl NeuralEnsemble {
    fn with_first(learner: WeakLearner) -> Self {
        NeuralEnsemble {
            learners: vec![learner],
            coefficients: vec![1.0],
        }
    }

    fn push(&mut self, learner: WeakLearner) {
        self.learners.push(learner);
        self.coefficients.push(1.0);
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    /// Combined inference score: sum of coefficient-weighted learner scores.
    pub fn score_features(&self, x: &Array2<f64>) -> Vec<f64> {
        let mut total = vec![0.0; x.nrows()];
        for (learner, &coeff) in self.learners.iter().zip(&self.coefficients) {
            for (slot, s) in learner.score(x).into_iter().enumerate() {
                total[slot] += coeff * s;
            }
        }
        total
    }

    pub fn score_query(&self, query: &QueryGroup) -> Vec<f64> {
        self.score_features(&query.feature_matrix())
    }
}

/// Mean over documents of squared target/prediction differences.
pub fn residual_mse_loss(targets: &[f64], predictions: &[f64]) -> f64 {
    assert_eq!(targets.len(), predictions.len(), "targets/predictions length mismatch");
    assert!(!targets.is_empty(), "MSE of an empty vector is undefined");
    let sum: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    sum / targets.len() as f64
}

fn clamp_learner_budget(requested: usize) -> usize {
    requested.clamp(1, MAX_LEARNERS)
}

/// Validation selection key for cached per-query score vectors.
fn key_for_scores(valid: &Dataset, scores: &[Vec<f64>], cutoffs: &[usize]) -> Result<SelectionKey> {
    let mut it = scores.iter();
    selection_key(valid, |_| it.next().expect("aligned score cache").clone(), cutoffs)
}

/// Trains a uBoost ensemble of feed-forward learners.
///
/// Learner 1 is the listwise-trained scorer (identical run to the standalone
/// trainer, same seed). For m >= 2, residual targets are computed from the
/// ensemble's current training scores, a fresh learner (seed + m - 1) is fit
/// to them with per-query MSE batches and its own best-epoch selection, and
/// the finished learner is kept only if the combined validation key improves;
/// otherwise boosting stops. The log holds one record per kept learner:
/// its own best training objective and the ensemble key after adding it.
pub fn uboost_train(
    train: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
) -> Result<(NeuralEnsemble, TrainingLog)> {
    let budget = clamp_learner_budget(config.max_learners);
    let (first, first_log) = train_urank(train, valid, config)?;
    let mut ensemble = NeuralEnsemble::with_first(WeakLearner::Mlp(first));

    let queries = prepare_trainable(train);
    let loss_cfg = config.loss_config();
    let mut train_scores: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| ensemble.score_features(&q.features))
        .collect();
    let valid_features: Vec<Array2<f64>> = valid.queries.iter().map(|q| q.feature_matrix()).collect();
    let mut valid_scores: Vec<Vec<f64>> = valid_features
        .iter()
        .map(|x| ensemble.score_features(x))
        .collect();

    let mut best_key = key_for_scores(valid, &valid_scores, &config.ndcg_cutoffs)?;
    let mut log = TrainingLog::default();
    let first_loss = first_log
        .records
        .iter()
        .find(|r| r.epoch == first_log.best_epoch)
        .map_or(0.0, |r| r.train_loss);
    log.records.push(EpochRecord {
        epoch: 1,
        train_loss: first_loss,
        validation_ndcg: best_key.0.clone(),
    });

    for m in 2..=budget {
        let targets: Vec<Vec<f64>> = queries
            .iter()
            .zip(&train_scores)
            .map(|(q, scores)| residuals(&q.partition, scores, &loss_cfg))
            .collect();
        let (learner, train_mse) = fit_mlp_to_residuals(
            &queries,
            &targets,
            train.feature_count,
            valid,
            &valid_features,
            &valid_scores,
            config,
            m,
        )?;

        let candidate_valid: Vec<Vec<f64>> = valid_features
            .iter()
            .zip(&valid_scores)
            .map(|(x, base)| {
                let add = mlp_forward_cached(&learner, x).scores;
                base.iter().zip(add).map(|(b, v)| b + v).collect()
            })
            .collect();
        let key = key_for_scores(valid, &candidate_valid, &config.ndcg_cutoffs)?;
        if !key.improves_over(&best_key, config.selection_tolerance) {
            break;
        }
        for (qi, q) in queries.iter().enumerate() {
            let add = mlp_forward_cached(&learner, &q.features).scores;
            for (slot, v) in add.into_iter().enumerate() {
                train_scores[qi][slot] += v;
            }
        }
        valid_scores = candidate_valid;
        best_key = key;
        ensemble.push(WeakLearner::Mlp(learner));
        log.records.push(EpochRecord {
            epoch: m,
            train_loss: train_mse,
            validation_ndcg: best_key.0.clone(),
        });
    }

    log.best_epoch = ensemble.len();
    Ok((ensemble, log))
}

/// Fits one MSE weak learner against fixed residual targets. Each epoch
/// shuffles queries, takes one Adam step per query on the mean-squared error,
/// and scores the candidate by the ensemble-plus-learner validation key; the
/// best epoch's weights and training MSE are returned.
#[allow(clippy::too_many_arguments)]
fn fit_mlp_to_residuals(
    queries: &[PreparedQuery],
    targets: &[Vec<f64>],
    feature_count: usize,
    valid: &Dataset,
    valid_features: &[Array2<f64>],
    valid_base: &[Vec<f64>],
    config: &TrainConfig,
    learner_index: usize,
) -> Result<(MLPParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(learner_index as u64 - 1));
    let mut params = MLPParams::glorot(
        feature_count,
        config.hidden_dims,
        config.activate_output,
        &mut rng,
    );
    let mut adam = AdamState::for_params(&params);
    let mut best: Option<(MLPParams, SelectionKey, f64)> = None;
    let mut best_epoch = 0usize;
    let mut order: Vec<usize> = (0..queries.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut mse_sum = 0.0;
        for &qi in &order {
            let q = &queries[qi];
            let y = &targets[qi];
            let cache = mlp_forward_cached(&params, &q.features);
            mse_sum += residual_mse_loss(y, &cache.scores);
            let scale = 2.0 / y.len() as f64;
            let upstream: Vec<f64> = cache
                .scores
                .iter()
                .zip(y)
                .map(|(f, t)| scale * (f - t))
                .collect();
            let mut grads = mlp_backward(&params, &q.features, &cache, &upstream);
            clip_global_norm(&mut grads, config.grad_clip_norm);
            adam_step(&mut params, &grads, &mut adam, config.learning_rate);
        }

        let mut qi = 0usize;
        let key = selection_key(
            valid,
            |_| {
                let add = mlp_forward_cached(&params, &valid_features[qi]).scores;
                let combined = valid_base[qi].iter().zip(add).map(|(b, v)| b + v).collect();
                qi += 1;
                combined
            },
            &config.ndcg_cutoffs,
        )?;
        let improved = match &best {
            None => true,
            Some((_, held, _)) => key.improves_over(held, config.selection_tolerance),
        };
        if improved {
            best = Some((params.clone(), key, mse_sum / queries.len() as f64));
            best_epoch = epoch;
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (params, _, mse) = best.expect("at least one epoch ran");
    Ok((params, mse))
}

/// Trains a urBoost ensemble of RNN-conditional learners.
///
/// The protocol mirrors [`uboost_train`]. Learner 1 minimizes the listwise
/// loss through the teacher-forced unrolling; later learners fit per-step
/// conditional scores to residual targets derived from the ensemble's own
/// per-step scores. Validation and inference always use first-step scores.
pub fn urboost_train(
    train: &Dataset,
    valid: &Dataset,
    config: &TrainConfig,
) -> Result<(NeuralEnsemble, TrainingLog)> {
    let budget = clamp_learner_budget(config.max_learners);
    let queries = prepare_trainable(train);
    if queries.is_empty() {
        return Err(LtrError::validation(
            "no trainable queries: every query has a single rating level",
        ));
    }
    let loss_cfg = config.loss_config();
    let valid_features: Vec<Array2<f64>> = valid.queries.iter().map(|q| q.feature_matrix()).collect();
    let zero_base: Vec<Vec<f64>> = valid_features.iter().map(|x| vec![0.0; x.nrows()]).collect();

    let (first, first_loss) = fit_rnn_learner(
        &queries,
        RnnTargets::Listwise,
        train.feature_count,
        valid,
        &valid_features,
        &zero_base,
        config,
        1,
        &loss_cfg,
    )?;
    let mut ensemble = NeuralEnsemble::with_first(WeakLearner::Rnn(first));

    let mut valid_scores: Vec<Vec<f64>> = valid_features
        .iter()
        .map(|x| ensemble.score_features(x))
        .collect();
    let mut best_key = key_for_scores(valid, &valid_scores, &config.ndcg_cutoffs)?;
    let mut log = TrainingLog::default();
    log.records.push(EpochRecord {
        epoch: 1,
        train_loss: first_loss,
        validation_ndcg: best_key.0.clone(),
    });

    for m in 2..=budget {
        // Residual targets from the ensemble's per-step conditional scores:
        // y(d) = -sum over steps of the loss gradient at d.
        let targets: Vec<Vec<f64>> = queries
            .iter()
            .map(|q| {
                let mut ens_steps: Option<Vec<Vec<f64>>> = None;
                for learner in &ensemble.learners {
                    let WeakLearner::Rnn(p) = learner else {
                        unreachable!("urboost ensembles hold RNN learners only")
                    };
                    let fwd = rnn_forward(p, &q.partition, &q.features);
                    match &mut ens_steps {
                        None => ens_steps = Some(fwd.step_scores),
                        Some(acc) => {
                            for (t, step) in fwd.step_scores.iter().enumerate() {
                                for (d, v) in step.iter().enumerate() {
                                    acc[t][d] += v;
                                }
                            }
                        }
                    }
                }
                let ens_steps = ens_steps.expect("ensemble holds at least one learner");
                let step_grads = step_gradients(&q.partition, &ens_steps, &loss_cfg);
                let mut y = vec![0.0; q.features.nrows()];
                for step in &step_grads {
                    for (d, g) in step.iter().enumerate() {
                        y[d] -= g;
                    }
                }
                y
            })
            .collect();

        let (learner, train_mse) = fit_rnn_learner(
            &queries,
            RnnTargets::Residuals(&targets),
            train.feature_count,
            valid,
            &valid_features,
            &valid_scores,
            config,
            m,
            &loss_cfg,
        )?;

        let candidate_valid: Vec<Vec<f64>> = valid_features
            .iter()
            .zip(&valid_scores)
            .map(|(x, base)| {
                let add = rnn_first_step_scores(&learner, x);
                base.iter().zip(add).map(|(b, v)| b + v).collect()
            })
            .collect();
        let key = key_for_scores(valid, &candidate_valid, &config.ndcg_cutoffs)?;
        if !key.improves_over(&best_key, config.selection_tolerance) {
            break;
        }
        valid_scores = candidate_valid;
        best_key = key;
        ensemble.push(WeakLearner::Rnn(learner));
        log.records.push(EpochRecord {
            epoch: m,
            train_loss: train_mse,
            validation_ndcg: best_key.0.clone(),
        });
    }

    log.best_epoch = ensemble.len();
    Ok((ensemble, log))
}

/// Inference for a boosted RNN ensemble: every document is scored at the
/// first step from the zero state, summed across learners. Ratings are never
/// consulted and each document is scored independently.
pub fn urboost_infer(ensemble: &NeuralEnsemble, query: &QueryGroup) -> Vec<f64> {
    ensemble.score_query(query)
}

/// What an RNN weak learner is trained against.
#[derive(Clone, Copy)]
enum RnnTargets<'a> {
    /// The listwise loss on teacher-forced conditional scores (learner 1).
    Listwise,
    /// Per-document residual targets, fit with per-step MSE (learners 2..).
    Residuals(&'a [Vec<f64>]),
}

/// Fits one RNN-conditional learner. Per epoch: shuffled queries, one Adam
/// step per query, gradients flowing through the full unrolling; candidate
/// selection by the ensemble-plus-learner validation key on first-step
/// scores. Returns the best epoch's weights and training objective.
#[allow(clippy::too_many_arguments)]
fn fit_rnn_learner(
    queries: &[PreparedQuery],
    objective: RnnTargets<'_>,
    feature_count: usize,
    valid: &Dataset,
    valid_features: &[Array2<f64>],
    valid_base: &[Vec<f64>],
    config: &TrainConfig,
    learner_index: usize,
    loss_cfg: &LossConfig,
) -> Result<(RnnScorerParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(learner_index as u64 - 1));
    let mut params = RnnScorerParams::glorot(
        feature_count,
        config.hidden_dims,
        config.rnn_hidden,
        &mut rng,
    );
    let mut adam = AdamState::for_params(&params);
    let mut best: Option<(RnnScorerParams, SelectionKey, f64)> = None;
    let mut best_epoch = 0usize;
    let mut order: Vec<usize> = (0..queries.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &qi in &order {
            let q = &queries[qi];
            let fwd = rnn_forward(&params, &q.partition, &q.features);
            let upstream: Vec<Vec<f64>> = match objective {
                RnnTargets::Listwise => {
                    loss_sum += conditional_loss(&q.partition, &fwd.step_scores, loss_cfg);
                    step_gradients(&q.partition, &fwd.step_scores, loss_cfg)
                }
                RnnTargets::Residuals(targets) => {
                    let y = &targets[qi];
                    let t_count = q.partition.num_steps();
                    let scored: usize = (0..t_count)
                        .map(|t| {
                            let s = &q.partition.steps[t];
                            s.level_docs.len() + s.lower_docs.len()
                        })
                        .sum();
                    let scale = 2.0 / scored as f64;
                    let mut up = Vec::with_capacity(t_count);
                    for (t, step) in q.partition.steps[..t_count].iter().enumerate() {
                        let mut dense = vec![0.0; y.len()];
                        for &d in step.level_docs.iter().chain(&step.lower_docs) {
                            let diff = fwd.step_scores[t][d] - y[d];
                            loss_sum += diff * diff / scored as f64;
                            dense[d] = scale * diff;
                        }
                        up.push(dense);
                    }
                    up
                }
            };
            let mut grads = rnn_backward(&params, &q.partition, &q.features, &fwd, &upstream);
            clip_global_norm(&mut grads, config.grad_clip_norm);
            adam_step(&mut params, &grads, &mut adam, config.learning_rate);
        }

        let mut qi = 0usize;
        let key = selection_key(
            valid,
            |_| {
                let add = rnn_first_step_scores(&params, &valid_features[qi]);
                let combined = valid_base[qi].iter().zip(add).map(|(b, v)| b + v).collect();
                qi += 1;
                combined
            },
            &config.ndcg_cutoffs,
        )?;
        let improved = match &best {
            None => true,
            Some((_, held, _)) => key.improves_over(held, config.selection_tolerance),
        };
        if improved {
            best = Some((params.clone(), key, loss_sum / queries.len() as f64));
            best_epoch = epoch;
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (params, _, objective_value) = best.expect("at least one epoch ran");
    Ok((params, objective_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Document;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn separable(queries: usize, docs: usize) -> Dataset {
        let mut qs = Vec::new();
        for q in 0..queries {
            let documents = (0..docs)
                .map(|i| {
                    let rating = ((i + q) % 3) as u32;
                    Document {
                        rating,
                        features: vec![rating as f64 / 2.0, ((i % 4) as f64) / 4.0],
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

    fn small_config() -> TrainConfig {
        TrainConfig {
            hidden_dims: (8, 6),
            learning_rate: 5e-3,
            max_epochs: 40,
            patience: 10,
            rnn_hidden: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn mse_identical_vectors_is_zero() {
        assert_eq!(residual_mse_loss(&[0.5, -1.0], &[0.5, -1.0]), 0.0);
    }

    #[test]
    fn mse_unit_example() {
        assert_eq!(residual_mse_loss(&[1.0, -1.0], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn mse_matches_two_pass_computation() {
        let t = [0.3, -0.7, 1.2, 0.0, 4.5];
        let p = [0.1, 0.7, -0.2, 0.25, 4.0];
        let mut naive = 0.0;
        for i in 0..t.len() {
            let d: f64 = t[i] - p[i];
            naive += d.powi(2);
        }
        naive /= t.len() as f64;
        assert_relative_eq!(residual_mse_loss(&t, &p), naive, max_relative = 1e-15);
    }

    #[test]
    fn ensemble_score_is_exact_sum_of_learners() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = MLPParams::glorot(2, (4, 3), true, &mut rng);
        let b = MLPParams::glorot(2, (4, 3), true, &mut rng);
        let x = array![[0.1, 0.9], [0.5, 0.5], [-0.3, 0.2]];
        let sa = mlp_forward_cached(&a, &x).scores;
        let sb = mlp_forward_cached(&b, &x).scores;
        let mut ensemble = NeuralEnsemble::with_first(WeakLearner::Mlp(a));
        ensemble.push(WeakLearner::Mlp(b));
        let combined = ensemble.score_features(&x);
        for i in 0..3 {
            assert_eq!(combined[i], sa[i] + sb[i]);
        }
    }

    #[test]
    fn single_learner_uboost_is_exactly_urank() {
        let ds = separable(6, 9);
        let config = TrainConfig {
            max_learners: 1,
            max_epochs: 15,
            patience: 5,
            ..small_config()
        };
        let (standalone, _) = train_urank(&ds, &ds, &config).unwrap();
        let (ensemble, log) = uboost_train(&ds, &ds, &config).unwrap();
        assert_eq!(ensemble.len(), 1);
        assert_eq!(log.best_epoch, 1);
        let WeakLearner::Mlp(first) = &ensemble.learners[0] else {
            panic!("uboost must produce MLP learners");
        };
        assert_eq!(first.w1, standalone.w1);
        assert_eq!(first.w2, standalone.w2);
        assert_eq!(first.w3, standalone.w3);
    }

    /// Ratings follow a noisy linear signal over the features, so a briefly
    /// trained first learner leaves real residual structure behind.
    fn noisy(queries: usize, docs: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut qs = Vec::new();
        for q in 0..queries {
            let documents = (0..docs)
                .map(|_| {
                    let features: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let signal = 2.0 * features[0] + features[1] - 1.5 * features[2]
                        + rng.gen_range(-0.2..0.2);
                    Document {
                        rating: (signal * 1.6).round().clamp(0.0, 4.0) as u32,
                        features,
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
            feature_count: 4,
        }
    }

    #[test]
    fn residual_learner_joins_when_the_first_underfits() {
        let train = noisy(60, 10, 5);
        let valid = noisy(25, 10, 6);
        let config = TrainConfig {
            max_learners: 5,
            max_epochs: 3,
            patience: 3,
            hidden_dims: (32, 16),
            learning_rate: 3e-4,
            ..small_config()
        };
        let (ensemble, log) = uboost_train(&train, &valid, &config).unwrap();
        assert!(
            ensemble.len() >= 2,
            "expected the validation gate to accept a residual learner, got {}",
            ensemble.len()
        );
        assert_eq!(log.records.len(), ensemble.len());
    }

    #[test]
    fn uboost_validation_key_is_monotone_over_learners() {
        let ds = separable(8, 9);
        let config = TrainConfig {
            max_learners: 3,
            max_epochs: 25,
            patience: 8,
            ..small_config()
        };
        let (ensemble, log) = uboost_train(&ds, &ds, &config).unwrap();
        assert_eq!(log.records.len(), ensemble.len());
        for pair in log.records.windows(2) {
            assert!(
                pair[1].validation_ndcg[0] >= pair[0].validation_ndcg[0] - 1e-6,
                "NDCG@1 regressed across an accepted learner"
            );
        }
    }

    #[test]
    fn boosting_stops_once_no_learner_improves_the_key() {
        // A strongly separable problem: the first learner alone reaches a
        // perfect key, so no later learner can lexicographically improve it
        // and selection must stop early.
        let ds = separable(10, 6);
        let config = TrainConfig {
            max_learners: 5,
            max_epochs: 60,
            patience: 20,
            ..small_config()
        };
        let (ensemble, log) = uboost_train(&ds, &ds, &config).unwrap();
        let last = log.records.last().unwrap();
        if last.validation_ndcg.iter().all(|v| (v - 1.0).abs() < 1e-12) {
            assert!(ensemble.len() < MAX_LEARNERS);
        }
    }

    #[test]
    fn urboost_single_learner_is_plain_rnn_model() {
        let ds = separable(5, 6);
        let config = TrainConfig {
            max_learners: 1,
            max_epochs: 10,
            patience: 3,
            ..small_config()
        };
        let (ensemble, log) = urboost_train(&ds, &ds, &config).unwrap();
        assert_eq!(ensemble.len(), 1);
        assert_eq!(log.records.len(), 1);
        assert!(matches!(ensemble.learners[0], WeakLearner::Rnn(_)));
    }

    #[test]
    fn urboost_inference_is_permutation_equivariant() {
        let ds = separable(5, 6);
        let config = TrainConfig {
            max_learners: 2,
            max_epochs: 8,
            patience: 3,
            ..small_config()
        };
        let (ensemble, _) = urboost_train(&ds, &ds, &config).unwrap();
        let group = &ds.queries[0];
        let scores = urboost_infer(&ensemble, group);
        let mut reversed = group.clone();
        reversed.documents.reverse();
        let mut rev_scores = urboost_infer(&ensemble, &reversed);
        rev_scores.reverse();
        for (a, b) in scores.iter().zip(&rev_scores) {
            assert_eq!(a, b, "permuting documents must permute scores identically");
        }
    }

    #[test]
    fn urboost_ratings_do_not_affect_inference() {
        let ds = separable(5, 6);
        let config = TrainConfig {
            max_learners: 1,
            max_epochs: 5,
            patience: 2,
            ..small_config()
        };
        let (ensemble, _) = urboost_train(&ds, &ds, &config).unwrap();
        let group = &ds.queries[1];
        let mut relabeled = group.clone();
        for doc in &mut relabeled.documents {
            doc.rating = 0;
        }
        assert_eq!(urboost_infer(&ensemble, group), urboost_infer(&ensemble, &relabeled));
    }
}
