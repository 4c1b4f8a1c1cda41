//! SGD and Adam with global-norm gradient clipping.

use super::store::ParameterStore;
use super::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::adam(),
            learning_rate: 1e-3,
            clip_norm: Some(1.0),
        }
    }
}

/// Stateful optimizer bound to one parameter store layout.
pub struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, store: &ParameterStore) -> Optimizer {
        assert!(cfg.learning_rate > 0.0, "learning rate must be positive");
        let moments: Vec<Tensor> = store
            .ids()
            .iter()
            .map(|&id| Tensor::zeros(store.value(id).shape().to_vec()))
            .collect();
        Optimizer { cfg, m: moments.clone(), v: moments, t: 0 }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Applies one update from the accumulated gradients. Gradients are
    /// left in place; callers zero them when starting the next
    /// accumulation.
    pub fn step(&mut self, store: &mut ParameterStore) {
        let clip_scale = match self.cfg.clip_norm {
            Some(max_norm) => {
                let total: f64 = store.ids().iter().map(|&id| store.grad(id).sq_norm()).sum();
                let norm = total.sqrt();
                if norm > max_norm && norm > 0.0 {
                    max_norm / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.t += 1;
        let lr = self.cfg.learning_rate;
        for (i, id) in store.ids().into_iter().enumerate() {
            let grad: Vec<f64> = store.grad(id).data().iter().map(|g| g * clip_scale).collect();
            let mut value = store.value(id).clone();
            match self.cfg.kind {
                OptimizerKind::Sgd => {
                    for (v, g) in value.data_mut().iter_mut().zip(&grad) {
                        *v -= lr * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let bias1 = 1.0 - beta1.powi(self.t as i32);
                    let bias2 = 1.0 - beta2.powi(self.t as i32);
                    let m = self.m[i].data_mut();
                    let vmom = self.v[i].data_mut();
                    for (j, (v, g)) in value.data_mut().iter_mut().zip(&grad).enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        vmom[j] = beta2 * vmom[j] + (1.0 - beta2) * g * g;
                        let m_hat = m[j] / bias1;
                        let v_hat = vmom[j] / bias2;
                        *v -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            store.set_value(id, value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64) -> ParameterStore {
        let mut store = ParameterStore::new();
        store.register("w", Tensor::scalar(value));
        store
    }

    #[test]
    fn sgd_update_formula() {
        let mut store = store_with(1.0);
        let id = store.id_of("w").unwrap();
        store.accumulate_grad(0, &Tensor::scalar(1.0));
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.1,
            clip_norm: None,
        };
        Optimizer::new(cfg, &store).step(&mut store);
        assert!((store.value(id).item() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_sgd_params_unchanged() {
        let mut store = store_with(2.5);
        let id = store.id_of("w").unwrap();
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.5,
            clip_norm: Some(1.0),
        };
        Optimizer::new(cfg, &store).step(&mut store);
        assert_eq!(store.value(id).item(), 2.5);
    }

    #[test]
    fn adam_first_step_close_to_lr() {
        // From zero moments with g=1: m_hat=1, v_hat=1, so the step is
        // alpha / (1 + eps) -- just under alpha.
        let mut store = store_with(0.0);
        let id = store.id_of("w").unwrap();
        store.accumulate_grad(0, &Tensor::scalar(1.0));
        let cfg = OptimizerConfig {
            kind: OptimizerKind::adam(),
            learning_rate: 1e-3,
            clip_norm: None,
        };
        Optimizer::new(cfg, &store).step(&mut store);
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((store.value(id).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn clipping_rescales_large_gradients() {
        let mut store = store_with(0.0);
        let id = store.id_of("w").unwrap();
        store.accumulate_grad(0, &Tensor::scalar(10.0));
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 1.0,
            clip_norm: Some(1.0),
        };
        Optimizer::new(cfg, &store).step(&mut store);
        // clipped gradient is exactly 1.0
        assert!((store.value(id).item() + 1.0).abs() < 1e-12);
    }
}
