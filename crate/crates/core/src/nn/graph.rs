//! Reverse-mode autodiff over a flat tape of dense tensor ops.
//!
//! A `Graph` is built once per loss evaluation: parameters are bound as
//! tracked leaves, ops append nodes, `backward` runs the tape in reverse, and
//! `flush_grads` adds each bound leaf's gradient into the `ParamStore`.
//! Every op checks its output for NaN/Inf and fails instead of propagating.

use crate::error::{Error, Result};

use super::params::ParamStore;
use super::rng::RngStream;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    /// Row slice of a matrix leaf (embedding lookup).
    Row { m: NodeId, row: usize },
    /// Matrix-vector product.
    MatVec { m: NodeId, x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    /// y = 1 − x.
    OneMinus { x: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    /// Elementwise product with a constant mask (dropout).
    MulMask { x: NodeId, mask: Tensor },
    Concat { parts: Vec<NodeId> },
    Dot { a: NodeId, b: NodeId },
    StackScalars { items: Vec<NodeId> },
    Softmax { x: NodeId },
    /// y = Σ_j weights[j] · items[j].
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    /// Elementwise max across same-shaped inputs; winners recorded forward.
    MaxElem { parts: Vec<NodeId>, argmax: Vec<u32> },
    /// −log softmax(logits)[target].
    CrossEntropy { logits: NodeId, target: usize },
    MeanScalars { items: Vec<NodeId> },
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: Vec<(String, NodeId)>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<NodeId> {
        value.check_finite(name)?;
        self.nodes.push(Node { op, value, grad: None });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Untracked constant input.
    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, value, "leaf")
    }

    /// Bind a parameter as a tracked leaf. Its gradient is delivered to the
    /// store by `flush_grads`. Bind each parameter once per graph and reuse
    /// the node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        let value = store.get(name)?.clone();
        let id = self.push(Op::Leaf, value, "param")?;
        self.bound.push((name.to_string(), id));
        Ok(id)
    }

    pub fn row(&mut self, m: NodeId, row: usize) -> Result<NodeId> {
        let mt = self.value(m);
        if mt.shape().len() != 2 {
            return Err(Error::Shape { op: "row", msg: format!("expected matrix, got {:?}", mt.shape()) });
        }
        if row >= mt.rows() {
            return Err(Error::Shape {
                op: "row",
                msg: format!("row {row} out of range for {:?}", mt.shape()),
            });
        }
        let value = Tensor::vector(mt.row(row).to_vec());
        self.push(Op::Row { m, row }, value, "row")
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> Result<NodeId> {
        let (mt, xt) = (self.value(m), self.value(x));
        if mt.shape().len() != 2 || xt.shape().len() != 1 || mt.cols() != xt.len() {
            return Err(Error::Shape {
                op: "matvec",
                msg: format!("{:?} × {:?}", mt.shape(), xt.shape()),
            });
        }
        let mut out = vec![0.0; mt.rows()];
        for (i, o) in out.iter_mut().enumerate() {
            let row = mt.row(i);
            *o = row.iter().zip(xt.values()).map(|(a, b)| a * b).sum();
        }
        self.push(Op::MatVec { m, x }, Tensor::vector(out), "matvec")
    }

    fn binary_elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (at, bt) = (self.value(a), self.value(b));
        if !at.same_shape(bt) {
            return Err(Error::Shape {
                op: op_name,
                msg: format!("{:?} vs {:?}", at.shape(), bt.shape()),
            });
        }
        let values = at.values().iter().zip(bt.values()).map(|(x, y)| f(*x, *y)).collect();
        let shape = at.shape().to_vec();
        self.push(op, Tensor::new(shape, values)?, op_name)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise(a, b, "mul", |x, y| x * y, Op::Mul { a, b })
    }

    fn unary(&mut self, x: NodeId, op_name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<NodeId> {
        let xt = self.value(x);
        let values = xt.values().iter().map(|v| f(*v)).collect();
        let shape = xt.shape().to_vec();
        self.push(op, Tensor::new(shape, values)?, op_name)
    }

    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "one_minus", |v| 1.0 - v, Op::OneMinus { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "sigmoid", sigmoid, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "tanh", f64::tanh, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "relu", |v| v.max(0.0), Op::Relu { x })
    }

    /// Inverted dropout. In training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1−rate); otherwise
    /// the input passes through unchanged.
    pub fn dropout(&mut self, x: NodeId, rate: f64, training: bool, rng: &mut RngStream) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let xt = self.value(x);
        let keep_scale = 1.0 / (1.0 - rate);
        let mask_values: Vec<f64> = (0..xt.len())
            .map(|_| if rng.below(rate) { 0.0 } else { keep_scale })
            .collect();
        let mask = Tensor::new(xt.shape().to_vec(), mask_values)?;
        let values = xt.values().iter().zip(mask.values()).map(|(a, m)| a * m).collect();
        let shape = xt.shape().to_vec();
        self.push(Op::MulMask { x, mask }, Tensor::new(shape, values)?, "dropout")
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape { op: "concat", msg: "no parts".into() });
        }
        let mut values = Vec::new();
        for &p in parts {
            values.extend_from_slice(self.value(p).values());
        }
        self.push(Op::Concat { parts: parts.to_vec() }, Tensor::vector(values), "concat")
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.len() != bt.len() {
            return Err(Error::Shape {
                op: "dot",
                msg: format!("{:?} vs {:?}", at.shape(), bt.shape()),
            });
        }
        let v = at.values().iter().zip(bt.values()).map(|(x, y)| x * y).sum();
        self.push(Op::Dot { a, b }, Tensor::scalar(v), "dot")
    }

    pub fn stack_scalars(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::Shape { op: "stack_scalars", msg: "no items".into() });
        }
        let mut values = Vec::with_capacity(items.len());
        for &i in items {
            let t = self.value(i);
            if !t.is_scalar() {
                return Err(Error::Shape {
                    op: "stack_scalars",
                    msg: format!("item has shape {:?}", t.shape()),
                });
            }
            values.push(t.item());
        }
        self.push(Op::StackScalars { items: items.to_vec() }, Tensor::vector(values), "stack_scalars")
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let values = softmax_slice(self.value(x).values());
        self.push(Op::Softmax { x }, Tensor::vector(values), "softmax")
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        let wt = self.value(weights);
        if wt.len() != items.len() || items.is_empty() {
            return Err(Error::Shape {
                op: "weighted_sum",
                msg: format!("{} weights for {} items", wt.len(), items.len()),
            });
        }
        let dim = self.value(items[0]).len();
        let mut out = vec![0.0; dim];
        for (j, &item) in items.iter().enumerate() {
            let it = self.value(item);
            if it.len() != dim {
                return Err(Error::Shape { op: "weighted_sum", msg: "ragged items".into() });
            }
            let w = self.value(weights).values()[j];
            for (o, v) in out.iter_mut().zip(it.values()) {
                *o += w * v;
            }
        }
        self.push(
            Op::WeightedSum { weights, items: items.to_vec() },
            Tensor::vector(out),
            "weighted_sum",
        )
    }

    /// Elementwise max across same-shaped vectors (max-pooling over time).
    pub fn max_elem(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape { op: "max_elem", msg: "no parts".into() });
        }
        let dim = self.value(parts[0]).len();
        let mut out = self.value(parts[0]).values().to_vec();
        let mut argmax = vec![0u32; dim];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            let pt = self.value(p);
            if pt.len() != dim {
                return Err(Error::Shape { op: "max_elem", msg: "ragged parts".into() });
            }
            for (i, v) in pt.values().iter().enumerate() {
                if *v > out[i] {
                    out[i] = *v;
                    argmax[i] = k as u32;
                }
            }
        }
        self.push(
            Op::MaxElem { parts: parts.to_vec(), argmax },
            Tensor::vector(out),
            "max_elem",
        )
    }

    /// Numerically stable −log softmax(logits)[target].
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let lt = self.value(logits);
        if target >= lt.len() {
            return Err(Error::Shape {
                op: "cross_entropy",
                msg: format!("target {target} out of range for {} logits", lt.len()),
            });
        }
        let loss = -log_softmax_at(lt.values(), target);
        self.push(Op::CrossEntropy { logits, target }, Tensor::scalar(loss), "cross_entropy")
    }

    /// Sum of scalar nodes, built from stack + dot with a ones constant.
    pub fn sum_scalars(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let stacked = self.stack_scalars(items)?;
        let ones = self.leaf(Tensor::vector(vec![1.0; items.len()]))?;
        self.dot(stacked, ones)
    }

    pub fn mean(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(Error::Shape { op: "mean", msg: "no items".into() });
        }
        let mut total = 0.0;
        for &i in items {
            let t = self.value(i);
            if !t.is_scalar() {
                return Err(Error::Shape { op: "mean", msg: format!("item has shape {:?}", t.shape()) });
            }
            total += t.item();
        }
        self.push(
            Op::MeanScalars { items: items.to_vec() },
            Tensor::scalar(total / items.len() as f64),
            "mean",
        )
    }

    fn add_grad(&mut self, id: NodeId, delta: &[f64]) {
        let node = &mut self.nodes[id.0];
        let grad = node
            .grad
            .get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        for (g, d) in grad.values_mut().iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn add_grad_at(&mut self, id: NodeId, offset: usize, delta: &[f64]) {
        let node = &mut self.nodes[id.0];
        let grad = node
            .grad
            .get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        for (g, d) in grad.values_mut()[offset..offset + delta.len()].iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Reverse sweep from a scalar loss node. Node gradients stay on the
    /// graph; use `flush_grads` to deliver bound-parameter gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape {
                op: "backward",
                msg: format!("loss must be a scalar, got {:?}", self.value(loss).shape()),
            });
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(out_grad) = self.nodes[i].grad.clone() else { continue };
            let g = out_grad.values().to_vec();
            // Ops capture node ids; clone cheap descriptors out of the tape
            // so gradient accumulation can borrow the graph mutably.
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Row { m, row } => {
                    let (m, row) = (*m, *row);
                    let cols = self.value(m).cols();
                    self.add_grad_at(m, row * cols, &g);
                }
                Op::MatVec { m, x } => {
                    let (m, x) = (*m, *x);
                    let xv = self.value(x).values().to_vec();
                    let (rows, cols) = (self.value(m).rows(), self.value(m).cols());
                    let mut dm = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            dm[r * cols + c] = g[r] * xv[c];
                        }
                    }
                    let mut dx = vec![0.0; cols];
                    {
                        let mv = self.value(m);
                        for r in 0..rows {
                            let row = mv.row(r);
                            for c in 0..cols {
                                dx[c] += row[c] * g[r];
                            }
                        }
                    }
                    self.add_grad(m, &dm);
                    self.add_grad(x, &dx);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.add_grad(a, &g);
                    self.add_grad(b, &g);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> = self.value(b).values().iter().zip(&g).map(|(bv, gv)| bv * gv).collect();
                    let db: Vec<f64> = self.value(a).values().iter().zip(&g).map(|(av, gv)| av * gv).collect();
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::OneMinus { x } => {
                    let x = *x;
                    let dx: Vec<f64> = g.iter().map(|gv| -gv).collect();
                    self.add_grad(x, &dx);
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let dx: Vec<f64> = self.nodes[i]
                        .value
                        .values()
                        .iter()
                        .zip(&g)
                        .map(|(y, gv)| y * (1.0 - y) * gv)
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::Tanh { x } => {
                    let x = *x;
                    let dx: Vec<f64> = self.nodes[i]
                        .value
                        .values()
                        .iter()
                        .zip(&g)
                        .map(|(y, gv)| (1.0 - y * y) * gv)
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::Relu { x } => {
                    let x = *x;
                    let dx: Vec<f64> = self
                        .value(x)
                        .values()
                        .iter()
                        .zip(&g)
                        .map(|(xv, gv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    self.add_grad(x, &dx);
                }
                Op::MulMask { x, mask } => {
                    let x = *x;
                    let dx: Vec<f64> = mask.values().iter().zip(&g).map(|(m, gv)| m * gv).collect();
                    self.add_grad(x, &dx);
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(p).len();
                        let slice = g[offset..offset + len].to_vec();
                        self.add_grad(p, &slice);
                        offset += len;
                    }
                }
                Op::Dot { a, b } => {
                    let (a, b) = (*a, *b);
                    let gv = g[0];
                    let da: Vec<f64> = self.value(b).values().iter().map(|bv| bv * gv).collect();
                    let db: Vec<f64> = self.value(a).values().iter().map(|av| av * gv).collect();
                    self.add_grad(a, &da);
                    self.add_grad(b, &db);
                }
                Op::StackScalars { items } => {
                    let items = items.clone();
                    for (j, item) in items.into_iter().enumerate() {
                        self.add_grad(item, &[g[j]]);
                    }
                }
                Op::Softmax { x } => {
                    let x = *x;
                    let y = self.nodes[i].value.values();
                    let inner: f64 = y.iter().zip(&g).map(|(yv, gv)| yv * gv).sum();
                    let dx: Vec<f64> = y.iter().zip(&g).map(|(yv, gv)| yv * (gv - inner)).collect();
                    self.add_grad(x, &dx);
                }
                Op::WeightedSum { weights, items } => {
                    let (weights, items) = (*weights, items.clone());
                    let wv = self.value(weights).values().to_vec();
                    let mut dw = vec![0.0; wv.len()];
                    for (j, &item) in items.iter().enumerate() {
                        dw[j] = self.value(item).values().iter().zip(&g).map(|(v, gv)| v * gv).sum();
                    }
                    self.add_grad(weights, &dw);
                    for (j, item) in items.into_iter().enumerate() {
                        let di: Vec<f64> = g.iter().map(|gv| wv[j] * gv).collect();
                        self.add_grad(item, &di);
                    }
                }
                Op::MaxElem { parts, argmax } => {
                    let parts = parts.clone();
                    let argmax = argmax.clone();
                    for (k, part) in parts.into_iter().enumerate() {
                        let dp: Vec<f64> = argmax
                            .iter()
                            .zip(&g)
                            .map(|(a, gv)| if *a as usize == k { *gv } else { 0.0 })
                            .collect();
                        self.add_grad(part, &dp);
                    }
                }
                Op::CrossEntropy { logits, target } => {
                    let (logits, target) = (*logits, *target);
                    let probs = softmax_slice(self.value(logits).values());
                    let gv = g[0];
                    let dl: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(j, p)| (p - if j == target { 1.0 } else { 0.0 }) * gv)
                        .collect();
                    self.add_grad(logits, &dl);
                }
                Op::MeanScalars { items } => {
                    let items = items.clone();
                    let share = g[0] / items.len() as f64;
                    for item in items {
                        self.add_grad(item, &[share]);
                    }
                }
            }
        }
        Ok(())
    }

    /// Add every bound parameter's gradient into the store.
    pub fn flush_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (name, id) in &self.bound {
            if let Some(grad) = self.grad(*id) {
                grad.check_finite("flush_grads")?;
                store.accumulate_grad(name, grad)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction.
pub fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let exps: Vec<f64> = xs.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// log softmax(xs)[i], numerically stable.
pub fn log_softmax_at(xs: &[f64], i: usize) -> f64 {
    let max = xs.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let log_total: f64 = xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    (xs[i] - max) - log_total
}
