use indexmap::IndexMap;

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Named, ordered collection of trainable tensors.
///
/// Insertion order is the iteration order and defines the checkpoint layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet<T: Element = f32> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Element> ParameterSet<T> {
    pub fn new() -> Self {
        ParameterSet {
            entries: IndexMap::new(),
        }
    }

    /// Adds a tensor under a fresh name and returns its position.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name:?}")));
        }
        let (idx, _) = self.entries.insert_full(name, value);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn by_index(&self, idx: usize) -> (&str, &Tensor<T>) {
        let (k, v) = self.entries.get_index(idx).expect("parameter index");
        (k.as_str(), v)
    }

    pub fn by_index_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        self.entries.get_index_mut(idx).expect("parameter index").1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.values_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Element>(&self) -> ParameterSet<U> {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Adds every tensor to `graph` as a leaf, in order.
    pub fn bind(&self, graph: &mut Graph<T>, requires_grad: bool) -> Vec<NodeId> {
        self.entries
            .values()
            .map(|v| graph.leaf(v.clone(), requires_grad))
            .collect()
    }

    /// Reads back the gradient of each bound parameter (zeros where none flowed).
    pub fn gradients(&self, graph: &Graph<T>, nodes: &[NodeId]) -> Vec<Tensor<T>> {
        nodes.iter().map(|&id| graph.grad_or_zeros(id)).collect()
    }

    pub fn bitwise_eq(&self, other: &ParameterSet<T>) -> bool {
        self.len() == other.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, va), (kb, vb))| ka == kb && va.bitwise_eq(vb))
    }
}
