//! The unique-rating listwise loss.
//!
//! For one query, documents are partitioned by distinct rating levels, highest
//! first. At every level except the lowest, each document at that level should
//! outscore everything rated strictly lower; the loss is the gain-weighted sum
//! of the negative log-likelihoods of those events under a softmax over the
//! document itself plus its strictly-lower set, normalized by the number of
//! loss-bearing levels.
//!
//! All softmax arithmetic is max-shifted, so scores of any magnitude are safe.

use crate::data::RatingPartition;
use crate::metrics::gain;

/// Loss evaluation settings. `window: None` uses the full strictly-lower set
/// in every denominator; `Some(u)` approximates it by chunking the lower set,
/// sorted by current score descending (ties by document index), into windows
/// of `u` documents (the last window may be smaller) and treating windows as
/// independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LossConfig {
    pub window: Option<usize>,
}

impl LossConfig {
    pub fn unwindowed() -> Self {
        LossConfig { window: None }
    }

    pub fn windowed(u: usize) -> Self {
        assert!(u > 0, "window size must be at least 1");
        LossConfig { window: Some(u) }
    }
}

/// Incremental max-shifted accumulator for ln(sum_i exp(x_i)).
/// Inputs must be finite; an empty accumulator has value -inf.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    /// Sum of exp(x - max) over everything added so far.
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        debug_assert!(x.is_finite(), "LogSumExp requires finite inputs");
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            // Rescale the running sum to the new maximum. An empty
            // accumulator has sum 0.0, which rescales to 0.0.
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sum == 0.0
    }

    pub fn value(&self) -> f64 {
        if self.is_empty() {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// ln(1 + exp(x)) without overflow for large |x|.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Splits `lower` into score-ordered windows. Sorting is by score descending
/// with ties broken by document index; `None` yields a single window.
pub(crate) fn make_windows(
    lower: &[usize],
    score_of: &impl Fn(usize) -> f64,
    window: Option<usize>,
) -> Vec<Vec<usize>> {
    if lower.is_empty() {
        return Vec::new();
    }
    let mut sorted = lower.to_vec();
    sorted.sort_by(|&a, &b| {
        score_of(b)
            .partial_cmp(&score_of(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let chunk = window.unwrap_or(sorted.len()).max(1);
    sorted.chunks(chunk).map(|c| c.to_vec()).collect()
}

/// Max-shifted negative log of exp(f_d) / (exp(f_d) + sum_{j in set} exp(f_j)).
fn window_neg_log_prob(doc_score: f64, member_scores: impl Iterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::new();
    acc.add(doc_score);
    for s in member_scores {
        acc.add(s);
    }
    acc.value() - doc_score
}

fn check_step(partition: &RatingPartition, step: usize) {
    assert!(
        step < partition.steps.len(),
        "step {step} out of range for a partition with {} levels",
        partition.steps.len()
    );
    assert!(
        step + 1 < partition.steps.len(),
        "likelihood is undefined at the final rating level (step {step})"
    );
}

/// Likelihood that document `doc` (at level `step`) outscores its whole
/// strictly-lower set: exp(f_d) / (exp(f_d) + sum of exp over lower docs).
///
/// Panics when `step` is the final rating level; the loss never evaluates it.
/// An empty lower set (possible only in hand-built partitions) yields 1.0.
pub fn likelihood(partition: &RatingPartition, scores: &[f64], step: usize, doc: usize) -> f64 {
    likelihood_with(partition, scores, step, doc, None)
}

/// Windowed variant: the lower set is chunked into windows of `window` docs
/// and the likelihood is the product of per-window probabilities. With
/// `window` at least the lower-set size this equals [`likelihood`] exactly.
pub fn likelihood_windowed(
    partition: &RatingPartition,
    scores: &[f64],
    step: usize,
    doc: usize,
    window: usize,
) -> f64 {
    assert!(window > 0, "window size must be at least 1");
    likelihood_with(partition, scores, step, doc, Some(window))
}

fn likelihood_with(
    partition: &RatingPartition,
    scores: &[f64],
    step: usize,
    doc: usize,
    window: Option<usize>,
) -> f64 {
    check_step(partition, step);
    debug_assert!(
        partition.steps[step].level_docs.contains(&doc),
        "doc {doc} is not at rating level {step}"
    );
    let score_of = |i: usize| scores[i];
    let mut prob = 1.0;
    for w in make_windows(&partition.steps[step].lower_docs, &score_of, window) {
        prob *= (-window_neg_log_prob(scores[doc], w.iter().map(|&j| scores[j]))).exp();
    }
    prob
}

/// The listwise loss for one query. Zero when the query has a single rating
/// level. Cost is O(levels * docs * window count) with stable softmaxes.
pub fn loss(partition: &RatingPartition, scores: &[f64], config: &LossConfig) -> f64 {
    let t_count = partition.num_steps();
    if t_count == 0 {
        return 0.0;
    }
    let score_of = |i: usize| scores[i];
    let mut total = 0.0;
    for step in &partition.steps[..t_count] {
        let g = gain(step.rating);
        let windows = make_windows(&step.lower_docs, &score_of, config.window);
        for &d in &step.level_docs {
            for w in &windows {
                total += g * window_neg_log_prob(scores[d], w.iter().map(|&j| scores[j]));
            }
        }
    }
    total / t_count as f64
}

/// Unwindowed loss in one cumulative pass over ascending rating levels.
///
/// A running log-sum-exp accumulator carries the strictly-lower score mass, so
/// each document's term is ln(1 + exp(lower_lse - f_d)) and the whole query
/// costs one sort plus O(n) softplus evaluations. Agrees with [`loss`] under
/// `LossConfig::unwindowed()` to floating-point accuracy.
pub fn loss_vectorized(ratings: &[u32], scores: &[f64]) -> f64 {
    assert_eq!(
        ratings.len(),
        scores.len(),
        "ratings and scores must have equal length"
    );
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    order.sort_unstable_by_key(|&i| ratings[i]);

    let mut acc = LogSumExp::new();
    let mut total = 0.0;
    let mut levels = 0usize;
    let mut pos = 0;
    while pos < order.len() {
        let level_rating = ratings[order[pos]];
        let level_end = order[pos..]
            .iter()
            .position(|&i| ratings[i] != level_rating)
            .map_or(order.len(), |p| pos + p);
        levels += 1;
        if !acc.is_empty() {
            let g = gain(level_rating);
            let lower_lse = acc.value();
            for &i in &order[pos..level_end] {
                total += g * softplus(lower_lse - scores[i]);
            }
        }
        for &i in &order[pos..level_end] {
            acc.add(scores[i]);
        }
        pos = level_end;
    }
    if levels <= 1 {
        0.0
    } else {
        total / (levels - 1) as f64
    }
}

/// Analytic residuals: the negative gradient of [`loss`] with respect to each
/// document's score, under the same windowing as `config`.
///
/// A document at a loss-bearing level is pulled up by the probability mass of
/// its lower sets; every lower document is pushed down by its own share of
/// each softmax it appears in. Residuals sum to ~0 per query by construction.
pub fn residuals(partition: &RatingPartition, scores: &[f64], config: &LossConfig) -> Vec<f64> {
    let per_step = step_gradients_impl(partition, &|_, d| scores[d], config.window);
    let mut out = vec![0.0; scores.len()];
    for step_grad in &per_step {
        for (d, g) in step_grad.iter().enumerate() {
            out[d] -= g;
        }
    }
    out
}

/// The listwise loss evaluated on per-step conditional scores: step `t`'s
/// probabilities use `step_scores[t]` for both the level documents and the
/// strictly-lower denominators. Equals [`loss`] when every step holds the
/// same score vector.
pub fn conditional_loss(
    partition: &RatingPartition,
    step_scores: &[Vec<f64>],
    config: &LossConfig,
) -> f64 {
    let t_count = partition.num_steps();
    assert_eq!(
        step_scores.len(),
        t_count,
        "need one score vector per loss-bearing step"
    );
    if t_count == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (t, step) in partition.steps[..t_count].iter().enumerate() {
        let g = gain(step.rating);
        let scores = &step_scores[t];
        let score_of = |i: usize| scores[i];
        let windows = make_windows(&step.lower_docs, &score_of, config.window);
        for &d in &step.level_docs {
            for w in &windows {
                total += g * window_neg_log_prob(scores[d], w.iter().map(|&j| scores[j]));
            }
        }
    }
    total / t_count as f64
}

/// Gradients of the loss with respect to per-step conditional scores.
///
/// `step_scores[t]` holds the scores a conditional scorer assigned at level
/// `t` (dense over all documents; only entries for that step's level and
/// lower documents are read). Returns dLoss/dscore per step, same layout.
pub fn step_gradients(
    partition: &RatingPartition,
    step_scores: &[Vec<f64>],
    config: &LossConfig,
) -> Vec<Vec<f64>> {
    assert_eq!(
        step_scores.len(),
        partition.num_steps(),
        "need one score vector per loss-bearing step"
    );
    step_gradients_impl(partition, &|t, d| step_scores[t][d], config.window)
}

fn step_gradients_impl(
    partition: &RatingPartition,
    score_at: &impl Fn(usize, usize) -> f64,
    window: Option<usize>,
) -> Vec<Vec<f64>> {
    let t_count = partition.num_steps();
    let n = partition.steps.iter().map(|s| s.level_docs.len()).sum();
    let mut grads = vec![vec![0.0; n]; t_count];
    if t_count == 0 {
        return grads;
    }
    for (t, step) in partition.steps[..t_count].iter().enumerate() {
        let g = gain(step.rating) / t_count as f64;
        let score_of = |i: usize| score_at(t, i);
        let windows = make_windows(&step.lower_docs, &score_of, window);
        for &d in &step.level_docs {
            let fd = score_at(t, d);
            for w in &windows {
                let mut m = fd;
                for &j in w {
                    m = m.max(score_at(t, j));
                }
                let mut denom = (fd - m).exp();
                for &j in w {
                    denom += (score_at(t, j) - m).exp();
                }
                let mut lower_mass = 0.0;
                for &j in w {
                    let share = (score_at(t, j) - m).exp() / denom;
                    grads[t][j] += g * share;
                    lower_mass += share;
                }
                grads[t][d] -= g * lower_mass;
            }
        }
    }
    grads
}
