//! Adam with bias correction.

use std::collections::BTreeMap;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

/// Optimizer state: per-parameter first/second moment estimates plus the
/// usual hyperparameters. Moments are allocated lazily on the first step.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Matrix> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Matrix> {
        self.v.get(name)
    }
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// Gradients must be populated for every parameter; they are left untouched
/// so the caller decides when to zero them. The store's step counter
/// increments by exactly one.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in &names {
        if store.grad(name).is_err() {
            return Err(Error::Contract(format!("missing gradient for parameter '{name}'")));
        }
    }

    let t = store.step() + 1;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);

    for name in &names {
        let grad = store.grad(name)?.clone();
        let (rows, cols) = grad.shape();
        let m = state.m.entry(name.clone()).or_insert_with(|| Matrix::zeros(rows, cols));
        let v = state.v.entry(name.clone()).or_insert_with(|| Matrix::zeros(rows, cols));
        if m.shape() != grad.shape() || v.shape() != grad.shape() {
            return Err(Error::Contract(format!(
                "adam moment shape for '{name}' does not match its gradient"
            )));
        }

        let param = store.param_mut(name)?;
        for i in 0..rows {
            for j in 0..cols {
                let g = grad[(i, j)];
                let mi = state.beta1 * m[(i, j)] + (1.0 - state.beta1) * g;
                let vi = state.beta2 * v[(i, j)] + (1.0 - state.beta2) * g * g;
                m[(i, j)] = mi;
                v[(i, j)] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                param[(i, j)] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
            }
        }
    }

    store.bump_step();
    Ok(())
}
