use std::collections::HashMap;

use super::Matrix;
use crate::error::TensorError;

/// Handle to one entry of a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Matrix,
    grad: Matrix,
    first_moment: Matrix,
    second_moment: Matrix,
}

/// Named trainable matrices with gradient accumulators and optimizer state.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<Entry>,
    by_name: HashMap<String, ParamId>,
    steps: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Re-registering a name replaces its value and resets its state.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        let (r, c) = value.shape();
        let entry = Entry {
            name: name.clone(),
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
            value,
        };
        if let Some(&id) = self.by_name.get(&name) {
            self.entries[id.0] = entry;
            return id;
        }
        let id = ParamId(self.entries.len());
        self.entries.push(entry);
        self.by_name.insert(name, id);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].grad
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Matrix) -> Result<(), TensorError> {
        let e = &mut self.entries[id.0];
        if e.grad.shape() != g.shape() {
            return Err(TensorError::Shape {
                op: "accumulate_grad",
                lhs: e.grad.shape(),
                rhs: g.shape(),
            });
        }
        e.grad.add_assign(g);
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(0.0);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.is_finite())
    }

    pub fn values_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }

    /// One adaptive-moment (Adam) update from the accumulated gradients, then zeroes them.
    pub fn adam_step(&mut self, opt: &AdamConfig) {
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = opt.betas;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for e in &mut self.entries {
            let n = e.value.len();
            let g = e.grad.data();
            let m = e.first_moment.data_mut();
            for i in 0..n {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            }
            let v = e.second_moment.data_mut();
            for i in 0..n {
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            }
            let m = e.first_moment.data();
            let v = e.second_moment.data();
            let w = e.value.data_mut();
            for i in 0..n {
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                w[i] -= opt.lr * (m_hat / (v_hat.sqrt() + opt.eps) + opt.weight_decay * w[i]);
            }
            e.grad.data_mut().fill(0.0);
        }
    }
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Decoupled weight decay; zero disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}
