//! Named parameter storage shared by every layer of a network.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Optimizer group; each group carries its own weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Backbone,
    Head,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub group: ParamGroup,
    /// Frozen parameters still take part in the forward pass but are never updated.
    pub trainable: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, group: ParamGroup) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name,
            value,
            group,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Per-parameter gradient buffers, indexed like the owning [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(len: usize) -> Self {
        Self {
            grads: vec![None; len],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor, scale: f64) {
        match &mut self.grads[id.0] {
            Some(t) => t.add_scaled_assign(g, scale),
            slot @ None => *slot = Some(g.scale(scale)),
        }
    }

    pub fn merge(&mut self, other: &Gradients, scale: f64) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g, scale);
            }
        }
    }
}

/// He-normal initialisation for a conv weight `[out, in, kh, kw]`.
pub fn kaiming_normal(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| normal.sample(rng)).collect()).expect("shape matches")
}
