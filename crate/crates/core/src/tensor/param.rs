//! Named parameters and the store that owns them.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MatError, Result};
use crate::tensor::data::Tensor;
use crate::tensor::scalar::Scalar;

/// A named, optionally frozen model parameter.
///
/// Frozen parameters receive no gradient and are bit-identical across
/// optimizer steps.
#[derive(Clone)]
pub struct Parameter<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub frozen: bool,
}

/// Ordered collection of parameters, keyed by dotted path names like
/// `"vae.dec.pbr.l3.conv.w"`. Iteration order is sorted by name, which makes
/// optimizer sweeps and checkpoints reproducible.
#[derive(Clone, Default)]
pub struct ParamStore<S> {
    params: BTreeMap<String, Parameter<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<S>) {
        self.params.insert(
            name.to_string(),
            Parameter {
                name: name.to_string(),
                tensor,
                frozen: false,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<S>> {
        self.params
            .get(name)
            .ok_or_else(|| MatError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter<S>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| MatError::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<S>> {
        self.params.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<S>> {
        self.params.values_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    /// Freeze or unfreeze every parameter whose name starts with `prefix`.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) -> usize {
        let mut n = 0;
        for p in self.params.values_mut() {
            if p.name.starts_with(prefix) {
                p.frozen = frozen;
                n += 1;
            }
        }
        n
    }

    /// Merge another store into this one; names must not collide.
    pub fn absorb(&mut self, other: ParamStore<S>) -> Result<()> {
        for (name, p) in other.params {
            if self.params.contains_key(&name) {
                return Err(MatError::Config(format!("duplicate parameter {name}")));
            }
            self.params.insert(name, p);
        }
        Ok(())
    }

    /// Remove all parameters with the given prefix, returning them.
    pub fn split_off_prefix(&mut self, prefix: &str) -> ParamStore<S> {
        let names: Vec<String> = self
            .params
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        let mut out = ParamStore::new();
        for n in names {
            let p = self.params.remove(&n).unwrap();
            out.params.insert(n, p);
        }
        out
    }

    pub fn total_elements(&self) -> usize {
        self.params.values().map(|p| p.tensor.numel()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for p in self.params.values() {
            out.params.insert(
                p.name.clone(),
                Parameter {
                    name: p.name.clone(),
                    tensor: p.tensor.cast::<T>(),
                    frozen: p.frozen,
                },
            );
        }
        out
    }

    /// Uniform Kaiming-style init: U(-b, b) with b = sqrt(6 / fan_in).
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n)
            .map(|_| S::from_f64(rng.random_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).unwrap());
    }

    /// Normal init with explicit standard deviation.
    pub fn init_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) {
        use rand_distr::{Distribution, StandardNormal};
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                S::from_f64(z * std)
            })
            .collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).unwrap());
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    pub fn init_full(&mut self, name: &str, shape: &[usize], v: f64) {
        self.insert(name, Tensor::full(shape, S::from_f64(v)));
    }
}
