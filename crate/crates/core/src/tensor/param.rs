//! Named parameter store shared by the optimizer and the gradient checker.

use std::collections::BTreeMap;

use super::Matrix;
use crate::error::{Error, Result};

/// Maps parameter names to values and gradients. Iteration order is the
/// sorted name order, which keeps every consumer deterministic.
///
/// Mutation is single-writer by design: one trainer thread owns the store.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Matrix>,
    grads: BTreeMap<String, Matrix>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; its gradient slot starts zeroed.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let name = name.into();
        self.grads.insert(name.clone(), Matrix::zeros(value.rows(), value.cols()));
        self.params.insert(name, value);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, name: &str) -> Result<&Matrix> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter '{name}'")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter '{name}'")))
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix> {
        self.grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient slot for '{name}'")))
    }

    /// Overwrite the gradient of `name`; the shape must match the parameter.
    pub fn set_grad(&mut self, name: &str, grad: Matrix) -> Result<()> {
        let param = self.param(name)?;
        if param.shape() != grad.shape() {
            return Err(Error::Contract(format!(
                "gradient shape {:?} does not match parameter '{name}' shape {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        self.grads.insert(name.to_string(), grad);
        Ok(())
    }

    /// Add `grad * scale` into the gradient slot of `name`.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Matrix, scale: f64) -> Result<()> {
        let param = self.param(name)?;
        if param.shape() != grad.shape() {
            return Err(Error::Contract(format!(
                "gradient shape {:?} does not match parameter '{name}' shape {:?}",
                grad.shape(),
                param.shape()
            )));
        }
        self.grads
            .get_mut(name)
            .expect("grad slot exists for every param")
            .add_scaled_in_place(grad, scale)
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            *g = Matrix::zeros(g.rows(), g.cols());
        }
    }

    /// Number of optimizer steps applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(super) fn bump_step(&mut self) {
        self.step += 1;
    }
}
