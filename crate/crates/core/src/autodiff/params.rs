use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::ModelRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<F> {
    pub value: Tensor<F>,
    pub trainable: bool,
}

/// Named parameter registry. Iteration order is the lexical order of names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<F> {
    params: BTreeMap<String, Parameter<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.params.insert(
            name,
            Parameter {
                value,
                trainable: true,
            },
        );
        Ok(())
    }

    /// Registers a `[fan_in, fan_out]` weight drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn insert_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ModelRng,
    ) -> Result<()> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product::<usize>();
        let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect::<Vec<_>>();
        self.insert(name, Tensor::from_f64(shape, &data)?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn expect(&self, name: &str) -> &Tensor<F> {
        self.get(name)
            .unwrap_or_else(|| panic!("parameter {name} not registered"))
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) {
        if let Some(p) = self.params.get_mut(name) {
            p.trainable = trainable;
        }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.params.get(name).is_some_and(|p| p.trainable)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Sets every parameter to zero. Used for closed-form checks.
    pub fn zero_all(&mut self) {
        for p in self.params.values_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = F::zero());
        }
    }
}

/// Accumulated gradients keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradTable<F> {
    grads: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> GradTable<F> {
    /// Zero gradients for every trainable parameter in `store`.
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        let grads = store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, p)| (n.to_string(), Tensor::zeros(p.value.shape())))
            .collect();
        Self { grads }
    }

    pub fn zero(&mut self) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.grads.get(name)
    }

    pub(crate) fn accumulate(&mut self, name: &str, g: &Tensor<F>) {
        if let Some(slot) = self.grads.get_mut(name) {
            slot.add_assign(g);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
