use std::collections::HashMap;

use super::{NumError, Tensor};

/// Handle to a slot in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Slot {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

/// Named trainable tensors with gradient accumulators and optimizer state.
///
/// Slots keep insertion order, which fixes the checkpoint layout and the
/// coordinate order seen by the gradient checker.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
    pub(crate) adam_steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, NumError> {
        if self.index.contains_key(name) {
            return Err(NumError::DuplicateParam(name.to_string()));
        }
        let n = value.len();
        let grad = Tensor::zeros(value.shape());
        self.index.insert(name.to_string(), self.slots.len());
        self.slots.push(Slot {
            name: name.to_string(),
            value,
            grad,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        });
        Ok(ParamId(self.slots.len() - 1))
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NumError> {
        self.index.get(name).map(|&i| ParamId(i)).ok_or_else(|| NumError::UnknownParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.slots[id.0].grad.data_mut()
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [Slot] {
        &mut self.slots
    }

    pub fn zero_grads(&mut self) {
        for s in &mut self.slots {
            s.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Euclidean norm of all gradient accumulators.
    pub fn grad_norm(&self) -> f64 {
        self.slots.iter().flat_map(|s| s.grad.data()).map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Concatenated parameter values in slot order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.slots.iter().flat_map(|s| s.value.data().iter().copied()).collect()
    }

    /// Scalar coordinate `k` in slot order, as (slot, offset).
    pub(crate) fn locate(&self, mut k: usize) -> (ParamId, usize) {
        for (i, s) in self.slots.iter().enumerate() {
            if k < s.value.len() {
                return (ParamId(i), k);
            }
            k -= s.value.len();
        }
        panic!("coordinate out of range");
    }
}
