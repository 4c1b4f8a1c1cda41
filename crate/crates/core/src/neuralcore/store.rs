//! Named parameter storage with per-parameter gradients.

use super::tensor::Tensor;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Handle to a registered parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

struct Entry {
    name: String,
    value: Tensor,
    grad: Tensor,
}

/// All trainable tensors of a model, addressed by unique name.
#[derive(Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    by_name: BTreeMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape().to_vec());
        let id = self.entries.len();
        self.entries.push(Entry { name: name.to_string(), value, grad });
        self.by_name.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) {
        assert_eq!(self.entries[id.0].value.shape(), value.shape());
        self.entries[id.0].value = value;
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub(crate) fn accumulate_grad(&mut self, index: usize, delta: &Tensor) {
        let grad = &mut self.entries[index].grad;
        assert_eq!(grad.shape(), delta.shape());
        for (g, d) in grad.data_mut().iter_mut().zip(delta.data()) {
            *g += d;
        }
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(0.0);
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        (0..self.entries.len()).map(ParamId).collect()
    }

    /// Nudges one coordinate of one parameter; finite-difference probes
    /// use this.
    pub fn perturb(&mut self, id: ParamId, index: usize, delta: f64) {
        self.entries[id.0].value.data_mut()[index] += delta;
    }

    /// Total parameter count across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Hex SHA-256 over names, shapes, and raw little-endian values.
    /// Bit-identical stores hash identically; used by the frozen-model
    /// contract tests and checkpoint verification.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(e.name.as_bytes());
            for d in e.value.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in e.value.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_grads() {
        let mut store = ParameterStore::new();
        let id = store.register("w", Tensor::scalar(2.0));
        assert_eq!(store.name(id), "w");
        store.accumulate_grad(0, &Tensor::scalar(1.5));
        store.accumulate_grad(0, &Tensor::scalar(0.5));
        assert_eq!(store.grad(id).item(), 2.0);
        store.zero_grads();
        assert_eq!(store.grad(id).item(), 0.0);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut store = ParameterStore::new();
        store.register("w", Tensor::scalar(1.0));
        store.register("w", Tensor::scalar(2.0));
    }

    #[test]
    fn hash_tracks_values() {
        let mut store = ParameterStore::new();
        let id = store.register("w", Tensor::scalar(1.0));
        let h1 = store.content_hash();
        store.set_value(id, Tensor::scalar(2.0));
        assert_ne!(h1, store.content_hash());
    }
}
