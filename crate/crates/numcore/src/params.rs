use std::collections::BTreeMap;

use crate::error::NumError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named, ordered collection of trainable tensors. Iteration follows
/// registration order, which fixes optimizer update order and
/// checkpoint layout.
pub struct ParamSet<T: Scalar> {
    entries: Vec<(String, Tensor<T>)>,
    by_name: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new(), by_name: BTreeMap::new() }
    }

    /// Registers a tensor and hands back a shared handle to it.
    pub fn register(&mut self, name: &str, tensor: Tensor<T>) -> Result<Tensor<T>, NumError> {
        if self.by_name.contains_key(name) {
            return Err(NumError::DuplicateParam { name: name.to_string() });
        }
        self.by_name.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor.clone()));
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    /// Deep copy of every tensor's values, for snapshots.
    pub fn snapshot(&self) -> Vec<(String, Vec<T>)> {
        self.entries.iter().map(|(n, t)| (n.clone(), t.values())).collect()
    }

    /// Restores values captured by `snapshot` from the same parameter set.
    pub fn restore(&self, snapshot: &[(String, Vec<T>)]) -> Result<(), NumError> {
        if snapshot.len() != self.entries.len() {
            return Err(NumError::StateMismatch {
                detail: format!(
                    "snapshot has {} tensors, parameter set has {}",
                    snapshot.len(),
                    self.entries.len()
                ),
            });
        }
        for ((name, values), (own_name, tensor)) in snapshot.iter().zip(&self.entries) {
            if name != own_name {
                return Err(NumError::StateMismatch {
                    detail: format!("snapshot entry {:?} does not match {:?}", name, own_name),
                });
            }
            tensor.set_data(values.clone())?;
        }
        Ok(())
    }
}
