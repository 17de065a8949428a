//! Named parameter tensors with paired gradient buffers and plain SGD.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::rng::RngStream;
use super::tensor::Tensor;

#[derive(Clone)]
struct Param {
    value: Tensor,
    grad: Tensor,
}

/// Insertion-ordered store of named parameters. Iteration order is the
/// registration order, which keeps checkpoints and updates deterministic.
#[derive(Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Invalid(format!("parameter `{name}` registered twice")));
        }
        let grad = Tensor::zeros(value.shape());
        self.index.insert(name.to_string(), self.params.len());
        self.names.push(name.to_string());
        self.params.push(Param { value, grad });
        Ok(())
    }

    /// Register a weight initialized uniformly on [-0.1, 0.1].
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], rng: &mut RngStream) -> Result<()> {
        let mut t = Tensor::zeros(shape);
        t.fill_uniform(-0.1, 0.1, rng);
        self.add(name, t)
    }

    /// Register a bias initialized to zeros.
    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.add(name, Tensor::zeros(shape))
    }

    /// Register a weight matrix initialized uniformly on ±√(6/(fan_in+fan_out)),
    /// keeping activation and gradient scale roughly constant across layers.
    pub fn init_glorot(&mut self, name: &str, shape: &[usize], rng: &mut RngStream) -> Result<()> {
        if shape.len() != 2 {
            return Err(Error::Invalid(format!(
                "glorot init needs a matrix shape, got {shape:?} for `{name}`"
            )));
        }
        let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
        let mut t = Tensor::zeros(shape);
        t.fill_uniform(-limit, limit, rng);
        self.add(name, t)
    }

    fn idx(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("unknown parameter `{name}`")))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.params[self.idx(name)?].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        let i = self.idx(name)?;
        Ok(&mut self.params[i].value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.params[self.idx(name)?].grad)
    }

    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let i = self.idx(name)?;
        let grad = &mut self.params[i].grad;
        if !grad.same_shape(delta) {
            return Err(Error::Shape {
                op: "accumulate_grad",
                msg: format!("parameter `{name}`: grad {:?} vs delta {:?}", grad.shape(), delta.shape()),
            });
        }
        for (g, d) in grad.values_mut().iter_mut().zip(delta.values()) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Plain SGD with L2 weight decay: p ← p − lr·(g + wd·p).
    /// Gradients are left untouched; the caller zeroes them.
    pub fn sgd_step(&mut self, lr: f64, weight_decay: f64) {
        self.sgd_step_clipped(lr, weight_decay, None);
    }

    /// SGD step with an optional global L2-norm gradient clip.
    pub fn sgd_step_clipped(&mut self, lr: f64, weight_decay: f64, max_grad_norm: Option<f64>) {
        let mut scale = 1.0;
        if let Some(max_norm) = max_grad_norm {
            let total: f64 = self
                .params
                .iter()
                .map(|p| p.grad.values().iter().map(|g| g * g).sum::<f64>())
                .sum();
            let norm = total.sqrt();
            if norm > max_norm && norm > 0.0 {
                scale = max_norm / norm;
            }
        }
        for p in &mut self.params {
            for (v, g) in p.value.values_mut().iter_mut().zip(p.grad.values()) {
                *v -= lr * (scale * g + weight_decay * *v);
            }
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.params)
            .map(|(n, p)| (n.as_str(), &p.value))
    }

    /// Bitwise equality of all parameter values (checkpoint round-trips).
    pub fn bit_equal(&self, other: &ParamStore) -> bool {
        if self.names != other.names {
            return false;
        }
        self.params.iter().zip(&other.params).all(|(a, b)| {
            a.value.shape() == b.value.shape()
                && a.value
                    .values()
                    .iter()
                    .zip(b.value.values())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }
}
