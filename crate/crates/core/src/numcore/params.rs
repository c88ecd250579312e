use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zeros,
    XavierUniform,
}

/// One entry of a parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: InitKind) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Position of a parameter inside a [`ParamStore`]; stable for the store's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    value: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Named parameters plus Adam moments and the optimizer step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    slots: IndexMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            slots: IndexMap::new(),
            step: 0,
        }
    }

    /// Registers a parameter with zeroed moments.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.slots.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        let (idx, _) = self.slots.insert_full(name, Slot { value, m, v });
        Ok(ParamId(idx))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.slots
            .get_index_of(name)
            .map(ParamId)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.slots.get_index(id.0).expect("param id in range").0
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.slots[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slots[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), &s.value))
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor, &Tensor) {
        let s = &self.slots[id.0];
        (&s.m, &s.v)
    }

    pub(crate) fn slot_mut(&mut self, idx: usize) -> (&mut Tensor, &mut Tensor, &mut Tensor) {
        let s = &mut self.slots[idx];
        (&mut s.value, &mut s.m, &mut s.v)
    }

    /// Zero-filled gradient buffer aligned with this store.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            tensors: self
                .slots
                .iter()
                .map(|(k, s)| (k.clone(), Tensor::zeros(s.value.shape())))
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients keyed by parameter name, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: IndexMap<String, Tensor>,
}

impl Gradients {
    pub fn from_map(tensors: IndexMap<String, Tensor>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, t)| (k.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.tensors.values_mut().zip(other.tensors.values()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Builds a store from a layout; deterministic in `seed`.
pub fn init_params(layout: &[ParamSpec], seed: u64) -> Result<ParamStore> {
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    for spec in layout {
        if spec.shape.is_empty() || spec.shape.contains(&0) {
            return Err(Error::EmptyShape(spec.name.clone()));
        }
        let mut t = Tensor::zeros(&spec.shape);
        if spec.init == InitKind::XavierUniform {
            let (fan_in, fan_out) = fans(&spec.shape);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        store.insert(spec.name.clone(), t)?;
    }
    Ok(store)
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, 1),
        [rows, rest @ ..] => (*rows, rest.iter().product()),
        [] => unreachable!("shape checked non-empty"),
    }
}
