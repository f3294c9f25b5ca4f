use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push((name.into(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].1
    }

    pub fn get_by_index(&self, idx: usize) -> &Tensor {
        &self.entries[idx].1
    }

    pub fn get_mut_by_index(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].1
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Overwrites values from `(name, shape, data)` triples; every stored
    /// parameter must be present with a matching shape.
    pub fn load<'a>(&mut self, mut lookup: impl FnMut(&str) -> Option<(&'a [usize], Vec<f64>)>) -> Result<()> {
        for (name, tensor) in &mut self.entries {
            let (shape, data) = lookup(name)
                .ok_or_else(|| Error::Usage(format!("missing parameter {name}")))?;
            if shape != tensor.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {name} has shape {:?}, stored {:?}",
                    tensor.shape(),
                    shape
                )));
            }
            tensor.data_mut().copy_from_slice(&data);
            tensor.zero_grad();
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    /// Places every parameter on `tape`. With `trainable == false` they
    /// enter as constants and receive no gradient.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bindings {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| {
                let value = Tensor::new(t.shape(), t.data().to_vec()).expect("consistent tensor");
                if trainable {
                    tape.leaf(value.with_requires_grad(true))
                } else {
                    tape.constant(value)
                }
            })
            .collect();
        Bindings { vars, trainable }
    }
}

/// Tape variables of a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: Vec<Var>,
    trainable: bool,
}

impl Bindings {
    /// Bindings over variables already on a tape, in store order.
    pub fn from_vars(vars: Vec<Var>, trainable: bool) -> Self {
        Bindings { vars, trainable }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Adds the tape gradients into the store's gradient slots.
    pub fn collect_grads(&self, tape: &Tape, store: &mut ParamStore) {
        if !self.trainable {
            return;
        }
        for (idx, &v) in self.vars.iter().enumerate() {
            if let Some(g) = tape.grad(v) {
                store.get_mut_by_index(idx).accumulate_grad(g);
            }
        }
    }
}

/// Kaiming-uniform initialisation for ReLU fan-in: `U(-√(6/fan_in), √(6/fan_in))`.
pub fn kaiming_uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}
