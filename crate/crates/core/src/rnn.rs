//! The urBoost conditional scorer: an embedding MLP feeding a vanilla tanh
//! RNN cell that re-scores the remaining candidate pool at every rating
//! level. Training is teacher-forced along the true partition; inference uses
//! only the first step, whose state is the zero vector.
//!
//! Step structure for a query with levels r_1 > r_2 > ...: at step t every
//! document rated at most r_t gets h = tanh(x_emb W_in + h_prev W_rec + b)
//! and score [h, x_emb] . w_out; the next state is the elementwise max-pool
//! of h over the documents rated exactly r_t.

use ndarray::Array2;

use crate::data::RatingPartition;
use crate::mlp::{elu, elu_prime};
use crate::optim::{glorot_uniform, ParamTensors};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnScorerParams {
    /// Embedding layers: features -> k1 -> k2, ELU after each product.
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    /// Cell input weights, k2 x h.
    pub w_in: Array2<f64>,
    /// Cell recurrent weights, h x h (rows index the previous state).
    pub w_rec: Array2<f64>,
    /// Cell bias, length h.
    pub bias: Vec<f64>,
    /// Output weights over [h, x_emb], length h + k2.
    pub w_out: Vec<f64>,
}

impl RnnScorerParams {
    pub fn glorot(
        feature_count: usize,
        hidden_dims: (usize, usize),
        rnn_hidden: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let (k1, k2) = hidden_dims;
        RnnScorerParams {
            w1: glorot_uniform(feature_count, k1, rng),
            w2: glorot_uniform(k1, k2, rng),
            w_in: glorot_uniform(k2, rnn_hidden, rng),
            w_rec: glorot_uniform(rnn_hidden, rnn_hidden, rng),
            bias: vec![0.0; rnn_hidden],
            w_out: glorot_uniform(rnn_hidden + k2, 1, rng).into_raw_vec_and_offset().0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        RnnScorerParams {
            w1: Array2::zeros(self.w1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            w_in: Array2::zeros(self.w_in.raw_dim()),
            w_rec: Array2::zeros(self.w_rec.raw_dim()),
            bias: vec![0.0; self.bias.len()],
            w_out: vec![0.0; self.w_out.len()],
        }
    }

    pub fn feature_count(&self) -> usize {
        self.w1.nrows()
    }

    pub fn rnn_hidden(&self) -> usize {
        self.w_rec.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.w2.ncols()
    }
}

impl ParamTensors for RnnScorerParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.w_in.as_slice().unwrap(),
            self.w_rec.as_slice().unwrap(),
            &self.bias,
            &self.w_out,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.w_in.as_slice_mut().unwrap(),
            self.w_rec.as_slice_mut().unwrap(),
            &mut self.bias,
            &mut self.w_out,
        ]
    }
}

struct StepCache {
    /// Documents scored at this step (level docs plus strictly lower).
    docs: Vec<usize>,
    /// State entering the step (h_{t-1}).
    h_prev: Vec<f64>,
    /// Per scored doc, aligned with `docs`: tanh output of the cell.
    h_tilde: Vec<Vec<f64>>,
    /// Per pooled coordinate: which level doc (index into level_docs)
    /// supplied the max; ties go to the lowest document index.
    argmax: Vec<usize>,
    /// The pooled state handed to the next step. Backprop re-routes through
    /// `argmax` instead, so outside tests this is inspection-only.
    #[allow(dead_code)]
    h_pooled: Vec<f64>,
}

/// Everything a backward pass needs from a teacher-forced forward pass.
pub struct RnnForward {
    emb_z1: Array2<f64>,
    emb_a1: Array2<f64>,
    emb_z2: Array2<f64>,
    /// x_emb: n x k2, the ELU output of the second embedding layer.
    embeddings: Array2<f64>,
    steps: Vec<StepCache>,
    /// Dense per-step scores; entries for documents outside s_t are NaN.
    pub step_scores: Vec<Vec<f64>>,
}

fn embed(params: &RnnScorerParams, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let z1 = x.dot(&params.w1);
    let a1 = z1.mapv(elu);
    let z2 = a1.dot(&params.w2);
    let a2 = z2.mapv(elu);
    (z1, a1, z2, a2)
}

/// One cell application: h = tanh(x_emb W_in + h_prev W_rec + bias).
fn cell(params: &RnnScorerParams, emb: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let mut z = params.bias.clone();
    for (i, &e) in emb.iter().enumerate() {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += e * params.w_in[[i, j]];
        }
    }
    for (i, &hp) in h_prev.iter().enumerate() {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += hp * params.w_rec[[i, j]];
        }
    }
    for v in z.iter_mut() {
        *v = v.tanh();
    }
    z
}

fn output_score(params: &RnnScorerParams, h_tilde: &[f64], emb: &[f64]) -> f64 {
    let h = params.rnn_hidden();
    let mut f = 0.0;
    for (i, &v) in h_tilde.iter().enumerate() {
        f += v * params.w_out[i];
    }
    for (i, &v) in emb.iter().enumerate() {
        f += v * params.w_out[h + i];
    }
    f
}

/// Teacher-forced forward pass over the |R|-1 loss-bearing steps.
pub fn rnn_forward(params: &RnnScorerParams, partition: &RatingPartition, x: &Array2<f64>) -> RnnForward {
    assert_eq!(x.ncols(), params.feature_count(), "feature dimension mismatch");
    let n = x.nrows();
    let (emb_z1, emb_a1, emb_z2, embeddings) = embed(params, x);
    let t_count = partition.num_steps();
    let mut steps = Vec::with_capacity(t_count);
    let mut step_scores = Vec::with_capacity(t_count);
    let mut h_prev = vec![0.0; params.rnn_hidden()];

    for step in &partition.steps[..t_count] {
        let mut docs: Vec<usize> = step
            .level_docs
            .iter()
            .chain(&step.lower_docs)
            .copied()
            .collect();
        docs.sort_unstable();
        let mut scores = vec![f64::NAN; n];
        let mut h_tilde = Vec::with_capacity(docs.len());
        for &d in &docs {
            let emb_row: Vec<f64> = embeddings.row(d).to_vec();
            let ht = cell(params, &emb_row, &h_prev);
            scores[d] = output_score(params, &ht, &emb_row);
            h_tilde.push(ht);
        }
        // Max-pool the new state over this step's level documents.
        let h = params.rnn_hidden();
        let mut argmax = vec![0usize; h];
        let mut h_pooled = vec![f64::NEG_INFINITY; h];
        for (li, &d) in step.level_docs.iter().enumerate() {
            let pos = docs.binary_search(&d).expect("level doc is scored");
            for j in 0..h {
                if h_tilde[pos][j] > h_pooled[j] {
                    h_pooled[j] = h_tilde[pos][j];
                    argmax[j] = li;
                }
            }
        }
        steps.push(StepCache {
            docs,
            h_prev: h_prev.clone(),
            h_tilde,
            argmax,
            h_pooled: h_pooled.clone(),
        });
        step_scores.push(scores);
        h_prev = h_pooled;
    }

    RnnForward {
        emb_z1,
        emb_a1,
        emb_z2,
        embeddings,
        steps,
        step_scores,
    }
}

/// Per-step conditional scores under teacher forcing (dense, NaN outside s_t).
pub fn rnn_conditional_scores(
    params: &RnnScorerParams,
    partition: &RatingPartition,
    x: &Array2<f64>,
) -> Vec<Vec<f64>> {
    rnn_forward(params, partition, x).step_scores
}

/// Inference scores: every document scored at the first step from the zero
/// state. One cell application per document.
pub fn rnn_first_step_scores(params: &RnnScorerParams, x: &Array2<f64>) -> Vec<f64> {
    rnn_first_step_scores_counted(params, x).0
}

pub(crate) fn rnn_first_step_scores_counted(
    params: &RnnScorerParams,
    x: &Array2<f64>,
) -> (Vec<f64>, usize) {
    assert_eq!(x.ncols(), params.feature_count(), "feature dimension mismatch");
    let (_, _, _, embeddings) = embed(params, x);
    let h0 = vec![0.0; params.rnn_hidden()];
    let mut cell_applications = 0usize;
    let scores = (0..x.nrows())
        .map(|d| {
            let emb_row: Vec<f64> = embeddings.row(d).to_vec();
            let ht = cell(params, &emb_row, &h0);
            cell_applications += 1;
            output_score(params, &ht, &emb_row)
        })
        .collect();
    (scores, cell_applications)
}

/// Backpropagation through time over the teacher-forced unrolling.
///
/// `upstream[t][d]` is dLoss/dscore for document `d` at step `t`; entries for
/// documents outside s_t must be zero. The max-pool subgradient routes each
/// pooled coordinate's gradient to its argmax document.
// Index loops mirror the forward kernels; zip chains over four buffers at
// once would bury the recurrences.
#[allow(clippy::needless_range_loop)]
pub fn rnn_backward(
    params: &RnnScorerParams,
    partition: &RatingPartition,
    x: &Array2<f64>,
    fwd: &RnnForward,
    upstream: &[Vec<f64>],
) -> RnnScorerParams {
    let t_count = fwd.steps.len();
    assert_eq!(upstream.len(), t_count, "one upstream vector per step");
    let h = params.rnn_hidden();
    let k2 = params.embedding_dim();
    let n = x.nrows();
    let mut grads = params.zeros_like();
    let mut d_embeddings = Array2::<f64>::zeros((n, k2));
    // dLoss/dh_pooled of the step being processed, carried backwards.
    let mut d_carry = vec![0.0; h];

    for t in (0..t_count).rev() {
        let step_cache = &fwd.steps[t];
        let level_docs = &partition.steps[t].level_docs;
        let mut d_h_prev = vec![0.0; h];
        // dLoss/dh_tilde per scored doc, starting from the pooling carry.
        let mut d_h_tilde = vec![vec![0.0; h]; step_cache.docs.len()];
        if t + 1 < t_count {
            for j in 0..h {
                let li = step_cache.argmax[j];
                let pos = step_cache
                    .docs
                    .binary_search(&level_docs[li])
                    .expect("level doc is scored");
                d_h_tilde[pos][j] += d_carry[j];
            }
        }
        for (pos, &d) in step_cache.docs.iter().enumerate() {
            let df = upstream[t][d];
            if df != 0.0 {
                for j in 0..h {
                    d_h_tilde[pos][j] += df * params.w_out[j];
                    grads.w_out[j] += df * step_cache.h_tilde[pos][j];
                }
                for i in 0..k2 {
                    d_embeddings[[d, i]] += df * params.w_out[h + i];
                    grads.w_out[h + i] += df * fwd.embeddings[[d, i]];
                }
            }
            // dz = d_h_tilde * (1 - tanh^2).
            let mut dz = vec![0.0; h];
            let mut all_zero = true;
            for j in 0..h {
                dz[j] = d_h_tilde[pos][j] * (1.0 - step_cache.h_tilde[pos][j].powi(2));
                all_zero &= dz[j] == 0.0;
            }
            if all_zero {
                continue;
            }
            for j in 0..h {
                grads.bias[j] += dz[j];
            }
            for i in 0..k2 {
                let e = fwd.embeddings[[d, i]];
                for j in 0..h {
                    grads.w_in[[i, j]] += e * dz[j];
                    d_embeddings[[d, i]] += params.w_in[[i, j]] * dz[j];
                }
            }
            for i in 0..h {
                let hp = step_cache.h_prev[i];
                for j in 0..h {
                    grads.w_rec[[i, j]] += hp * dz[j];
                    d_h_prev[i] += params.w_rec[[i, j]] * dz[j];
                }
            }
        }
        d_carry = d_h_prev;
    }
    // d_carry now holds dLoss/dh_0, which is constant zero: discard.

    // Backprop the embedding MLP.
    let d_z2 = &d_embeddings * &fwd.emb_z2.mapv(elu_prime);
    grads.w2 = fwd.emb_a1.t().dot(&d_z2);
    let d_a1 = d_z2.dot(&params.w2.t());
    let d_z1 = &d_a1 * &fwd.emb_z1.mapv(elu_prime);
    grads.w1 = x.t().dot(&d_z1);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{conditional_loss, step_gradients, LossConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_params(seed: u64, l: usize, dims: (usize, usize), h: usize) -> RnnScorerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RnnScorerParams::glorot(l, dims, h, &mut rng)
    }

    fn random_matrix(seed: u64, n: usize, l: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        glorot_uniform(n, l, &mut rng)
    }

    #[test]
    fn two_level_queries_score_from_the_zero_state() {
        let params = small_params(1, 4, (3, 3), 5);
        let x = random_matrix(2, 6, 4);
        let partition = RatingPartition::from_ratings(&[1, 0, 1, 0, 0, 1]);
        let fwd = rnn_forward(&params, &partition, &x);
        assert_eq!(fwd.step_scores.len(), 1);
        let first = rnn_first_step_scores(&params, &x);
        for (d, &expected) in first.iter().enumerate() {
            assert_relative_eq!(fwd.step_scores[0][d], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn singleton_level_pools_to_its_own_state() {
        let params = small_params(3, 3, (3, 2), 4);
        let x = random_matrix(4, 5, 3);
        let partition = RatingPartition::from_ratings(&[2, 1, 0, 0, 1]);
        let fwd = rnn_forward(&params, &partition, &x);
        // Level 0 holds only doc 0; the pooled state must equal its h_tilde.
        let step = &fwd.steps[0];
        let pos = step.docs.binary_search(&0).unwrap();
        assert_eq!(step.h_pooled, step.h_tilde[pos]);
        // The next step must have been fed exactly that state.
        assert_eq!(fwd.steps[1].h_prev, step.h_pooled);
    }

    #[test]
    fn zero_cell_weights_reduce_to_static_embedding_scores() {
        let mut params = small_params(5, 4, (3, 3), 4);
        params.w_in.fill(0.0);
        params.w_rec.fill(0.0);
        params.bias.iter_mut().for_each(|v| *v = 0.0);
        let x = random_matrix(6, 5, 4);
        let scores = rnn_first_step_scores(&params, &x);
        // tanh(0) = 0 kills the h half; only w_out's embedding half remains.
        let (_, _, _, emb) = embed(&params, &x);
        for d in 0..5 {
            let expected: f64 = (0..3)
                .map(|i| emb[[d, i]] * params.w_out[4 + i])
                .sum();
            assert_relative_eq!(scores[d], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn inference_is_permutation_equivariant_and_linear_cost() {
        let params = small_params(7, 4, (3, 3), 5);
        let x = random_matrix(8, 7, 4);
        let (scores, cell_apps) = rnn_first_step_scores_counted(&params, &x);
        assert_eq!(cell_apps, 7, "one cell application per document");
        // Reverse the document order; scores must follow the permutation.
        let mut reversed = Array2::zeros((7, 4));
        for i in 0..7 {
            for j in 0..4 {
                reversed[[i, j]] = x[[6 - i, j]];
            }
        }
        let rev_scores = rnn_first_step_scores(&params, &reversed);
        for i in 0..7 {
            assert_eq!(rev_scores[i], scores[6 - i]);
        }
    }

    #[test]
    fn teacher_forced_step_count_is_levels_minus_one() {
        let params = small_params(9, 3, (2, 2), 3);
        let x = random_matrix(10, 7, 3);
        // 7 documents but only 3 distinct levels: 2 steps, never n - 1.
        let partition = RatingPartition::from_ratings(&[2, 2, 1, 1, 1, 0, 0]);
        let fwd = rnn_forward(&params, &partition, &x);
        assert_eq!(fwd.step_scores.len(), 2);
    }

    #[test]
    fn backward_matches_finite_differences_through_unrolling() {
        let ratings = [3u32, 1, 0, 2, 1, 0];
        let partition = RatingPartition::from_ratings(&ratings);
        let cfg = LossConfig::unwindowed();
        let x = random_matrix(21, 6, 4);
        let mut params = small_params(20, 4, (4, 3), 3);

        let fwd = rnn_forward(&params, &partition, &x);
        let upstream = step_gradients(&partition, &fwd.step_scores, &cfg);
        let analytic = rnn_backward(&params, &partition, &x, &fwd, &upstream);

        let h = 1e-6;
        let tensor_count = params.tensors().len();
        for t in 0..tensor_count {
            for i in 0..params.tensors()[t].len() {
                let orig = params.tensors()[t][i];
                params.tensors_mut()[t][i] = orig + h;
                let up = conditional_loss(
                    &partition,
                    &rnn_conditional_scores(&params, &partition, &x),
                    &cfg,
                );
                params.tensors_mut()[t][i] = orig - h;
                let down = conditional_loss(
                    &partition,
                    &rnn_conditional_scores(&params, &partition, &x),
                    &cfg,
                );
                params.tensors_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let got = analytic.tensors()[t][i];
                let scale = fd.abs().max(got.abs());
                assert!(
                    (fd - got).abs() <= 1e-4 * scale.max(1e-3),
                    "tensor {t} weight {i}: fd {fd} vs analytic {got}"
                );
            }
        }
    }

    #[test]
    fn single_level_query_has_no_steps() {
        let params = small_params(30, 3, (2, 2), 3);
        let x = random_matrix(31, 4, 3);
        let partition = RatingPartition::from_ratings(&[1, 1, 1, 1]);
        let fwd = rnn_forward(&params, &partition, &x);
        assert!(fwd.step_scores.is_empty());
        let grads = rnn_backward(&params, &partition, &x, &fwd, &[]);
        assert!(grads.w_rec.iter().all(|&v| v == 0.0));
    }
}
