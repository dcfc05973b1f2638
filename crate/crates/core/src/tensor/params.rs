use indexmap::IndexMap;
use rand::Rng;

use super::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Weight initialisation schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `±sqrt(6 / fan_in)`, suited to ReLU stacks.
    HeUniform { fan_in: usize },
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Glorot { fan_in: usize, fan_out: usize },
    Uniform { bound: f64 },
}

impl Init {
    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let bound = match self {
            Init::Zeros => return 0.0,
            Init::Ones => return 1.0,
            Init::HeUniform { fan_in } => (6.0 / fan_in.max(1) as f64).sqrt(),
            Init::Glorot { fan_in, fan_out } => (6.0 / (fan_in + fan_out).max(1) as f64).sqrt(),
            Init::Uniform { bound } => bound,
        };
        rng.gen_range(-bound..=bound)
    }
}

/// Ordered collection of named parameter tensors.
///
/// Iteration order is insertion order, which fixes checkpoint layout and the
/// order in which optimizer state is kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::argument("params", format!("duplicate parameter `{}`", name)));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    /// Adds a freshly initialised tensor.
    pub fn init<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        init: Init,
        rng: &mut R,
    ) -> Result<()> {
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| T::of(init.sample(rng))).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Records every tensor as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), g.leaf(v.clone(), trainable)))
            .collect();
        Bound { vars }
    }

    /// Zeroed gradient buffers aligned with store order.
    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.tensors
            .values()
            .map(|t| vec![T::zero(); t.numel()])
            .collect()
    }
}

/// Parameter name to graph handle mapping produced by [`ParamStore::bind`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    /// Pairs parameter names with existing graph handles, e.g. leaves created
    /// by a gradient check.
    pub fn from_vars<'a>(names: impl IntoIterator<Item = &'a str>, vars: &[Var]) -> Result<Self> {
        let names: Vec<&str> = names.into_iter().collect();
        if names.len() != vars.len() {
            return Err(Error::argument("params", format!("{} names for {} vars", names.len(), vars.len())));
        }
        Ok(Bound {
            vars: names.into_iter().map(str::to_string).zip(vars.iter().copied()).collect(),
        })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::argument("params", format!("unknown parameter `{}`", name)))
    }

    /// Adds this graph's parameter gradients into `acc` (store order).
    pub fn accumulate_grads<T: Scalar>(&self, g: &Graph<T>, acc: &mut [Vec<T>]) {
        for (buf, &v) in acc.iter_mut().zip(self.vars.values()) {
            if let Some(grad) = g.grad(v) {
                for (a, &d) in buf.iter_mut().zip(grad) {
                    *a += d;
                }
            }
        }
    }
}
