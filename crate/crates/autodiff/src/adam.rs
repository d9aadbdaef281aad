use serde::{Deserialize, Serialize};

use crate::{AutodiffError, Gradients, ParamStore, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.tensor.len()])
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update. `weight_decay` is the λ of a `λ‖θ‖²` penalty: its gradient
    /// `2λθ` is added to `grads` before the moment updates.
    ///
    /// Nothing is written if any gradient entry is non-finite.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &Gradients,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        for (id, g) in grads.iter() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(AutodiffError::NonFiniteGradient {
                    name: store.get(id).name.clone(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (id, g) in grads.iter() {
            let theta = store.get_mut(id).tensor.data_mut();
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            for i in 0..theta.len() {
                let gi = g[i] + 2.0 * weight_decay * theta[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn one_scalar(x: f64) -> (ParamStore, crate::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::scalar(x));
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let (mut store, id) = one_scalar(1.5);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let grads = Gradients::zeros_like(&store);
        for _ in 0..3 {
            adam.step(&mut store, &grads, 0.1, 0.0).unwrap();
        }
        assert_eq!(store.tensor(id).data(), &[1.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g² after bias correction, so Δθ = lr · g / (|g| + eps)
        let (mut store, id) = one_scalar(0.0);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(id)[0] = 1.0;
        adam.step(&mut store, &grads, 0.1, 0.0).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((store.tensor(id).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut store, id) = one_scalar(0.0);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(id)[0] = f64::NAN;
        let err = adam.step(&mut store, &grads, 0.1, 0.0).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::NonFiniteGradient {
                name: "theta".into()
            }
        );
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn weight_decay_shrinks_towards_zero() {
        let (mut store, id) = one_scalar(2.0);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let grads = Gradients::zeros_like(&store);
        adam.step(&mut store, &grads, 0.01, 0.5).unwrap();
        assert!(store.tensor(id).data()[0] < 2.0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![0.0, 0.0]));
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(a).copy_from_slice(&[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut grads, 1.0), 5.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-15);
        assert_eq!(clip_global_norm(&mut grads, 5.0), grads.global_norm());
    }
}
