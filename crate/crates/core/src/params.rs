//! Named parameter storage and tape binding.

use std::collections::HashMap;

use mdhr_tensor::{Scalar, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{CoreError, Result};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Param<S: Scalar> {
    pub name: String,
    pub value: Tensor<S>,
    /// Whether decoupled weight decay applies.
    pub decay: bool,
}

/// Ordered parameter list. Order is registration order and is stable
/// across runs, which keeps optimizer traversal deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S: Scalar> {
    params: Vec<Param<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>, decay: bool) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, value, decay });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id.0].value
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<S>> {
        self.id_of(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Replaces a value, keeping the shape contract.
    pub fn set(&mut self, name: &str, value: Tensor<S>) -> Result<()> {
        let id = self.id_of(name).ok_or_else(|| CoreError::Load(format!("unknown parameter {name}")))?;
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(CoreError::Load(format!(
                "parameter {name}: shape {:?} does not match the model's {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), decay: p.decay })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Records every parameter as a trainable leaf of `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<S>) -> Bound<'t, S> {
        Bound { vars: self.params.iter().map(|p| tape.param(p.value.clone())).collect() }
    }
}

/// Parameters recorded on one tape, indexed like the store.
pub struct Bound<'t, S: Scalar> {
    vars: Vec<Var<'t, S>>,
}

impl<'t, S: Scalar> Bound<'t, S> {
    /// Wraps vars already recorded in store order.
    pub fn from_vars(vars: Vec<Var<'t, S>>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var<'t, S> {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters the output did not reach get zeros.
    pub fn grads(&self) -> Vec<Tensor<S>> {
        self.vars
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(v.shape())))
            .collect()
    }
}

/// Uniform on `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`.
pub fn kaiming_uniform<S: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<S> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| S::of(rng.gen_range(-bound..=bound)))
}

pub fn uniform<S: Scalar>(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<S> {
    Tensor::from_fn(shape.to_vec(), |_| S::of(rng.gen_range(lo..hi)))
}
