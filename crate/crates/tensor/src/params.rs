use std::collections::HashMap;

use crate::{Result, Tensor, TensorError};

/// Handle to a tensor registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, insertion-ordered set of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateParam(name));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradients keyed by parameter.
#[derive(Clone, Debug, Default)]
pub struct ParamGrads {
    grads: HashMap<ParamId, Tensor>,
}

impl ParamGrads {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ParamId, grad: Tensor) {
        match self.grads.get_mut(&id) {
            Some(g) => g.add_assign(&grad),
            None => {
                self.grads.insert(id, grad);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Euclidean norm over every gradient entry.
    pub fn global_norm(&self) -> f64 {
        self.grads.values().flat_map(|g| g.data().iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(|g| g.data().iter().all(|v| v.is_finite()))
    }
}
