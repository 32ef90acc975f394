//! Optimizer plumbing shared by the neural scorers: a flattened view over
//! parameter tensors, global-norm gradient clipping, Adam, and seeded
//! Glorot-uniform initialization.

use ndarray::Array2;
use rand::Rng;

/// A parameter (or gradient) container exposed as ordered flat slices.
/// `tensors` and `tensors_mut` must agree on order and lengths.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

/// L2 norm of all tensors concatenated.
pub fn global_norm(params: &impl ParamTensors) -> f64 {
    params
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Scales every tensor by max_norm/norm when the global norm exceeds
/// `max_norm`; otherwise leaves them untouched. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut impl ParamTensors, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for tensor in grads.tensors_mut() {
            for v in tensor.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates, one pair of buffers per tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn for_params(params: &impl ParamTensors) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        AdamState {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut impl ParamTensors,
    grads: &impl ParamTensors,
    state: &mut AdamState,
    lr: f64,
) {
    state.step += 1;
    let correction1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let correction2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    let grad_tensors = grads.tensors();
    for (slot, tensor) in params.tensors_mut().into_iter().enumerate() {
        let g_tensor = grad_tensors[slot];
        assert_eq!(tensor.len(), g_tensor.len(), "parameter/gradient shape mismatch");
        let m = &mut state.first[slot];
        let v = &mut state.second[slot];
        for i in 0..tensor.len() {
            let g = g_tensor[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            tensor[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// Glorot-uniform matrix: entries uniform in +-sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Pair {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl ParamTensors for Pair {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.a, &self.b]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.a, &mut self.b]
        }
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut g = Pair { a: vec![3.0], b: vec![0.0] };
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g.a, vec![3.0]);
    }

    #[test]
    fn clip_scales_single_overlarge_gradient() {
        let mut g = Pair { a: vec![10.0], b: vec![] };
        clip_global_norm(&mut g, 5.0);
        assert_eq!(g.a, vec![5.0]);
    }

    #[test]
    fn clip_scales_joint_norm_across_tensors() {
        // Norm of [5, 12] is 13; every entry scales by 5/13.
        let mut g = Pair { a: vec![5.0], b: vec![12.0] };
        let norm = clip_global_norm(&mut g, 5.0);
        assert_relative_eq!(norm, 13.0, max_relative = 1e-15);
        assert_relative_eq!(g.a[0], 5.0 * 5.0 / 13.0, max_relative = 1e-15);
        assert_relative_eq!(g.b[0], 12.0 * 5.0 / 13.0, max_relative = 1e-15);
        assert_relative_eq!(global_norm(&g), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let mut p = Pair { a: vec![1.5], b: vec![-2.0] };
        let g = Pair { a: vec![0.0], b: vec![0.0] };
        let mut state = AdamState::for_params(&p);
        adam_step(&mut p, &g, &mut state, 0.1);
        assert_eq!(p.a, vec![1.5]);
        assert_eq!(p.b, vec![-2.0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_step_magnitude_approaches_lr_under_constant_gradient() {
        let mut p = Pair { a: vec![0.0], b: vec![] };
        let mut state = AdamState::for_params(&p);
        let g = Pair { a: vec![0.37], b: vec![] };
        let lr = 1e-3;
        let mut last = 0.0;
        for _ in 0..5000 {
            last = p.a[0];
            adam_step(&mut p, &g, &mut state, lr);
        }
        let update = (p.a[0] - last).abs();
        assert_relative_eq!(update, lr, max_relative = 1e-2);
    }

    #[test]
    fn adam_treats_coordinates_independently_and_identically() {
        let mut p = Pair { a: vec![1.0, 1.0], b: vec![1.0] };
        let g = Pair { a: vec![0.25, 0.25], b: vec![0.25] };
        let mut state = AdamState::for_params(&p);
        for _ in 0..10 {
            adam_step(&mut p, &g, &mut state, 0.01);
        }
        assert_eq!(p.a[0], p.a[1]);
        assert_eq!(p.a[0], p.b[0]);
    }

    #[test]
    fn glorot_respects_limit_and_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = glorot_uniform(30, 20, &mut rng);
        let limit = (6.0 / 50.0f64).sqrt();
        assert!(m.iter().all(|v| v.abs() < limit));
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let m2 = glorot_uniform(30, 20, &mut rng2);
        assert_eq!(m, m2);
    }
}
