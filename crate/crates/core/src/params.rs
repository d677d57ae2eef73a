//! Named, ordered model parameters and their bridge onto the autodiff tape.
//!
//! Insertion order is part of the contract: checkpoints serialize tensors in
//! store order, the optimizer keeps its moment estimates aligned by index,
//! and gradient reports name parameters in that order. A parameter may
//! freeze a prefix of its rows (used for the padding row of an embedding
//! table); frozen rows receive zero gradient and are never updated.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Param {
    name: String,
    tensor: Tensor,
    frozen_rows: usize,
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn frozen_rows(&self) -> usize {
        self.frozen_rows
    }

    /// Flat indices covered by frozen rows sit below this bound.
    pub fn frozen_scalars(&self) -> usize {
        if self.frozen_rows == 0 {
            0
        } else {
            self.frozen_rows * self.tensor.cols()
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: Vec<Param>,
}

impl ParameterStore {
    pub fn new() -> ParameterStore {
        ParameterStore { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        self.push_with_frozen_rows(name, tensor, 0)
    }

    /// Add a parameter whose first `frozen_rows` rows are excluded from
    /// gradients and updates. Requires a rank-2 tensor when non-zero.
    pub fn push_with_frozen_rows(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor,
        frozen_rows: usize,
    ) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        if frozen_rows > 0 && (tensor.shape().len() != 2 || frozen_rows > tensor.rows()) {
            return Err(Error::invalid(format!(
                "frozen_rows {frozen_rows} invalid for shape {:?}",
                tensor.shape()
            )));
        }
        self.params.push(Param {
            name,
            tensor,
            frozen_rows,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn param(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.params[index].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Put every parameter on the tape as a leaf, in store order.
    pub fn leaves(&self, tape: &mut Tape) -> StoreLeaves {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect();
        StoreLeaves { vars }
    }
}

/// Tape handles for every parameter of a store, aligned by index.
#[derive(Debug, Clone)]
pub struct StoreLeaves {
    vars: Vec<Var>,
}

impl StoreLeaves {
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }

    pub fn named(&self, store: &ParameterStore, name: &str) -> Result<Var> {
        store
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// A recorded forward pass ending in a scalar loss.
///
/// Training reads the value and then asks for gradients; finite-difference
/// checking re-runs the builder and reads only the value, so the backward
/// pass runs exactly once per step.
#[derive(Debug)]
pub struct Evaluated {
    tape: Tape,
    loss: Var,
    leaves: StoreLeaves,
}

impl Evaluated {
    pub fn new(tape: Tape, loss: Var, leaves: StoreLeaves) -> Result<Evaluated> {
        if tape.value(loss).len() != 1 {
            return Err(Error::invalid("loss must be scalar"));
        }
        Ok(Evaluated { tape, loss, leaves })
    }

    pub fn value(&self) -> f64 {
        self.tape.value(self.loss).data()[0]
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Backward pass mapped onto store order. Parameters the loss does not
    /// reach get zero gradients; frozen rows are zeroed.
    pub fn gradients(&self, store: &ParameterStore) -> Result<StoreGradients> {
        if self.leaves.len() != store.len() {
            return Err(Error::invalid("leaves do not match parameter store"));
        }
        let mut raw: Gradients = self.tape.backward(self.loss)?;
        let mut grads = Vec::with_capacity(store.len());
        for (i, param) in store.iter().enumerate() {
            let mut g = raw
                .take(self.leaves.var(i))
                .unwrap_or_else(|| Tensor::zeros(param.tensor().shape().to_vec()));
            let frozen = param.frozen_scalars();
            for slot in g.data_mut()[..frozen].iter_mut() {
                *slot = 0.0;
            }
            grads.push(g);
        }
        Ok(StoreGradients { grads })
    }
}

/// Gradients aligned with a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct StoreGradients {
    grads: Vec<Tensor>,
}

impl StoreGradients {
    pub fn get(&self, index: usize) -> &Tensor {
        &self.grads[index]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    /// First non-finite entry as (parameter index, flat index), if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        for (i, g) in self.grads.iter().enumerate() {
            if let Some(k) = g.data().iter().position(|x| !x.is_finite()) {
                return Some((i, k));
            }
        }
        None
    }
}
