use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// Handle to one parameter tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameters plus Adam moment estimates.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    index: HashMap<String, usize>,
}

/// One gradient tensor per parameter, aligned with the store.
#[derive(Clone, Debug)]
pub struct Grads(Vec<Tensor>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        self.0[id.0].add_assign(g);
    }

    pub fn set(&mut self, id: ParamId, g: Tensor) {
        debug_assert_eq!(self.0[id.0].shape(), g.shape());
        self.0[id.0] = g;
    }

    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|t| t.fill(0.0));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Glorot-uniform weights: `U(±sqrt(6 / (fan_in + fan_out)))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(shape, data).expect("shape product matches")
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.m.push(Tensor::zeros(value.shape()));
        self.v.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Parameters whose names start with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.ids().filter(move |&id| self.names[id.0].starts_with(prefix))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.values.iter().map(|t| Tensor::zeros(t.shape())).collect())
    }

    pub fn adam_steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor, &Tensor) {
        (&self.m[id.0], &self.v[id.0])
    }

    /// Clears the moment estimates and step count (a fresh optimizer).
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        self.m.iter_mut().for_each(|t| t.fill(0.0));
        self.v.iter_mut().for_each(|t| t.fill(0.0));
    }

    /// Copies in values by name. Every name must exist with a matching shape.
    pub fn assign(&mut self, entries: &[(String, Tensor)]) -> Result<(), NnError> {
        for (name, t) in entries {
            let id = self
                .id(name)
                .ok_or_else(|| NnError::Checkpoint(format!("unknown parameter {name}")))?;
            if self.values[id.0].shape() != t.shape() {
                return Err(NnError::Checkpoint(format!(
                    "parameter {name}: checkpoint shape {:?} != model shape {:?}",
                    t.shape(),
                    self.values[id.0].shape()
                )));
            }
            self.values[id.0] = t.clone();
        }
        Ok(())
    }

    /// One bias-corrected Adam update on `trainable` (all parameters when `None`).
    /// Gradients are checked for NaN/Inf before anything is modified.
    pub fn adam_step(&mut self, grads: &Grads, cfg: &AdamConfig, trainable: Option<&[ParamId]>) -> Result<(), NnError> {
        let all: Vec<ParamId>;
        let ids = match trainable {
            Some(ids) => ids,
            None => {
                all = self.ids().collect();
                &all
            }
        };
        for &id in ids {
            if grads.0[id.0].shape() != self.values[id.0].shape() {
                return Err(NnError::Shape {
                    op: "adam",
                    lhs: grads.0[id.0].shape().to_vec(),
                    rhs: self.values[id.0].shape().to_vec(),
                });
            }
            grads.0[id.0].check_finite(&format!("gradient of {}", self.names[id.0]))?;
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for &id in ids {
            let g = grads.0[id.0].data();
            let m = self.m[id.0].data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            }
            let v = self.v[id.0].data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            }
            let (m, v) = (self.m[id.0].data(), self.v[id.0].data());
            let p = self.values[id.0].data_mut();
            for ((pi, mi), vi) in p.iter_mut().zip(m).zip(v) {
                let mhat = mi / c1;
                let vhat = vi / c2;
                *pi -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
