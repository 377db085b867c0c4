use indexmap::IndexMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Named parameters in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a trainable tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.insert(name.into(), t.tracked())
    }

    /// Registers a tensor that is stored and checkpointed but never trained.
    pub fn add_frozen(&mut self, name: impl Into<String>, mut t: Tensor) -> ParamId {
        t.set_requires_grad(false);
        self.insert(name.into(), t)
    }

    fn insert(&mut self, name: String, t: Tensor) -> ParamId {
        let (idx, prev) = self.entries.insert_full(name, t);
        assert!(prev.is_none(), "duplicate parameter name");
        ParamId(idx)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).map(|(k, _)| k.as_str()).unwrap()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.values().filter(|t| t.requires_grad()).map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.values_mut().for_each(Tensor::zero_grad);
    }

    /// Overwrites the value of `name` keeping its trainability.
    pub fn set_value(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let t = self.entries.get_mut(name).ok_or_else(|| Error::Contract(format!("no parameter named {name}")))?;
        if t.numel() != data.len() {
            return Err(Error::shape("set_value", format!("{name} holds {} values, got {}", t.numel(), data.len())));
        }
        t.data_mut().copy_from_slice(&data);
        Ok(())
    }

    /// Copies every tensor of `other` whose name and shape match; returns
    /// the names that were loaded.
    pub fn load_matching(&mut self, other: &ParamStore) -> Vec<String> {
        let mut loaded = Vec::new();
        for (name, src) in other.iter() {
            if let Some(dst) = self.entries.get_mut(name) {
                if dst.shape() == src.shape() && dst.requires_grad() {
                    dst.data_mut().copy_from_slice(src.data());
                    loaded.push(name.to_string());
                }
            }
        }
        loaded
    }
}
