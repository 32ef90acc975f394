//! Deliberately naive reference implementations used only by tests.
//!
//! Everything here trades speed and numerical finesse for being an
//! independent, direct transcription of the definitions: raw exponentials,
//! quadratic pair loops, finite differences. Production code paths must
//! agree with these oracles to tight tolerances but share no code with them
//! beyond the basic data types.

use crate::gbdt::{delta_z, DeltaZContext, HessianForm, LambdaPair};

/// Sorts document indices by rating descending, ties by index ascending.
fn rating_order(ratings: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ratings.len()).collect();
    order.sort_by(|&a, &b| ratings[b].cmp(&ratings[a]).then(a.cmp(&b)));
    order
}

/// The listwise loss computed straight from its definition with raw
/// exponentials: partition by distinct rating descending, and for every
/// loss-bearing level accumulate -(2^r - 1) ln P(d) for each level document,
/// averaging over the level count minus one. `window` chunks each
/// strictly-lower set, sorted by score descending (ties by index), into
/// groups of that size whose probabilities multiply.
pub fn oracle_loss(ratings: &[u32], scores: &[f64], window: Option<usize>) -> f64 {
    assert_eq!(ratings.len(), scores.len());
    let mut levels: Vec<u32> = ratings.to_vec();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    levels.dedup();
    if levels.len() <= 1 {
        return 0.0;
    }

    let mut total = 0.0;
    for &level in &levels[..levels.len() - 1] {
        let gain = (level as f64).exp2() - 1.0;
        let mut lower: Vec<usize> = (0..ratings.len()).filter(|&i| ratings[i] < level).collect();
        lower.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores must be comparable")
                .then(a.cmp(&b))
        });
        let chunk = window.unwrap_or(lower.len()).max(1);
        for d in (0..ratings.len()).filter(|&i| ratings[i] == level) {
            let mut log_prob = 0.0;
            for group in lower.chunks(chunk) {
                let mut denom = scores[d].exp();
                for &j in group {
                    denom += scores[j].exp();
                }
                log_prob += (scores[d].exp() / denom).ln();
            }
            total -= gain * log_prob;
        }
    }
    total / (levels.len() - 1) as f64
}

/// Central finite differences of [`oracle_loss`], h = 1e-5.
pub fn oracle_gradient(ratings: &[u32], scores: &[f64], window: Option<usize>) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut grad = vec![0.0; scores.len()];
    let mut probe = scores.to_vec();
    for i in 0..scores.len() {
        probe[i] = scores[i] + H;
        let up = oracle_loss(ratings, &probe, window);
        probe[i] = scores[i] - H;
        let down = oracle_loss(ratings, &probe, window);
        probe[i] = scores[i];
        grad[i] = (up - down) / (2.0 * H);
    }
    grad
}

/// ListMLE per-step likelihoods for all-distinct ratings: documents sorted by
/// rating descending, step t's probability is exp(f_t) over the suffix sum
/// from t onward. Returns the first n - 1 terms (the final term is 1).
pub fn listmle_step_likelihoods(ratings: &[u32], scores: &[f64]) -> Vec<f64> {
    assert_eq!(ratings.len(), scores.len());
    {
        let mut seen = ratings.to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), ratings.len(), "ListMLE oracle needs all-distinct ratings");
    }
    let order = rating_order(ratings);
    let mut probs = Vec::with_capacity(order.len().saturating_sub(1));
    for t in 0..order.len().saturating_sub(1) {
        let mut denom = 0.0;
        for &j in &order[t..] {
            denom += scores[j].exp();
        }
        probs.push(scores[order[t]].exp() / denom);
    }
    probs
}

/// Textbook pairwise lambdas: for every ordered pair with r(i) > r(j),
/// rho = 1 / (1 + exp(sigma (F(i) - F(j)))), lambda = sigma dz rho pushed
/// down on i and up on j, curvature per `form`. The window-1 gradients must
/// reproduce these exactly up to float noise.
pub fn pairwise_lambda_reference(
    ratings: &[u32],
    scores: &[f64],
    ctx: &DeltaZContext,
    form: HessianForm,
) -> Vec<LambdaPair> {
    assert_eq!(ratings.len(), scores.len());
    let mut pairs = vec![LambdaPair::default(); scores.len()];
    let sigma = ctx.sigma;
    for i in 0..ratings.len() {
        for j in 0..ratings.len() {
            if ratings[i] <= ratings[j] {
                continue;
            }
            let rho = 1.0 / (1.0 + (sigma * (scores[i] - scores[j])).exp());
            let dz = delta_z(i, j, ctx);
            let lambda = sigma * dz * rho;
            pairs[i].grad -= lambda;
            pairs[j].grad += lambda;
            let curvature = 2.0 * sigma * sigma * dz;
            match form {
                HessianForm::AsPrinted => {
                    pairs[i].hess += curvature * rho;
                    pairs[j].hess -= curvature * rho * (1.0 - rho);
                }
                HessianForm::Symmetric => {
                    let c = curvature * rho * (1.0 - rho);
                    pairs[i].hess += c;
                    pairs[j].hess += c;
                }
            }
        }
    }
    pairs
}
