//! Named parameter storage and initialization.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Insertion-ordered set of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.values).enumerate().map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.values.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect()
    }
}

/// Shape-driven initializer shared by every layer constructor.
pub struct Initializer<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
}

impl<R: Rng> Initializer<'_, R> {
    /// `[out × in]` weight drawn from uniform(−1/√in, 1/√in).
    pub fn weight(&mut self, name: impl Into<String>, out: usize, input: usize) -> ParamId {
        let bound = 1.0 / (input as f64).sqrt();
        let t = Tensor::uniform(out, input, bound, self.rng);
        self.store.insert(name, t)
    }

    /// `[1 × width]` bias drawn from uniform(−1/√fan_in, 1/√fan_in).
    pub fn bias(&mut self, name: impl Into<String>, width: usize, fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let t = Tensor::uniform(1, width, bound, self.rng);
        self.store.insert(name, t)
    }

    pub fn uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, bound: f64) -> ParamId {
        let t = Tensor::uniform(rows, cols, bound, self.rng);
        self.store.insert(name, t)
    }

    pub fn constant(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.store.insert(name, value)
    }
}
