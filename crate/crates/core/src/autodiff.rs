//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node on a linear tape; node ids are
//! assigned in creation order, which is already a topological order. Trainable
//! weights live outside the graph in a [`ParamSet`] and enter it as `Param`
//! leaves, so one parameter set can back many short-lived graphs (one per
//! training pair or decoded sentence). Gradients for parameters are written to
//! a separate [`GradStore`].

use crate::error::{Error, Result};
use crate::tensor::{self, axpy, mismatch, Tensor};

pub type ParamId = usize;

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

/// An ordered set of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(Parameter { name, value });
        Ok(self.params.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// A zeroed gradient buffer shaped like this set.
    pub fn zero_grads(&self) -> GradStore {
        GradStore {
            grads: self
                .params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect(),
        }
    }
}

/// Gradient accumulators, one per parameter of the [`ParamSet`] they were created from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore {
    grads: Vec<Tensor>,
}

impl GradStore {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id]
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }
}

/// One SGD update with global-norm clipping; returns the gradient norm before clipping.
///
/// If the global norm exceeds `clip` every gradient is rescaled by `clip / norm`,
/// then `p <- p - lr * grad` and the gradients are zeroed.
pub fn sgd_step(params: &mut ParamSet, grads: &mut GradStore, lr: f64, clip: f64) -> f64 {
    let norm = grads.global_norm();
    let factor = if norm > clip { clip / norm } else { 1.0 };
    for (p, g) in params.params.iter_mut().zip(&grads.grads) {
        axpy(-lr * factor, g.data(), p.value.data_mut());
    }
    grads.zero();
    norm
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Sigmoid,
    Tanh,
    Log,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

/// The operation that produced a node.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Constant,
    Variable,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Stack(Vec<Var>),
    Row { table: Var, index: usize },
    Softmax(Var),
    /// `-log softmax(logits)[target]`; keeps the softmax for the backward pass.
    Nll { logits: Var, target: usize, probs: Vec<f64> },
    Sum(Var),
    Scale(Var, f64),
}

impl Op {
    pub fn parents(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Variable | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Binary(_, a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Unary(_, a)
            | Op::Softmax(a)
            | Op::Sum(a)
            | Op::Scale(a, _)
            | Op::Row { table: a, .. }
            | Op::Nll { logits: a, .. } => vec![*a],
            Op::Concat { parts, .. } | Op::Stack(parts) => parts.clone(),
        }
    }
}

struct Node {
    /// `None` for parameter leaves, whose value is read from the `ParamSet`.
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation over a borrowed parameter set.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    leaf_grads: Vec<Option<Tensor>>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
            leaf_grads: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        node_value(&self.nodes, self.params, v)
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a [`Graph::variable`] leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Option<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Some(value), Op::Constant, false)
    }

    /// A leaf whose gradient is accumulated in the graph (see [`Graph::grad`]).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(Some(value), Op::Variable, true)
    }

    /// The leaf for parameter `id`; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        let v = self.push(None, Op::Param(id), true);
        self.param_vars[id] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Some(out), Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Some(out), Op::Transpose(a), rg))
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let x = self.value(a);
        let data: Vec<f64> = match op {
            UnaryOp::Sigmoid => x.data().iter().map(|&v| tensor::sigmoid(v)).collect(),
            UnaryOp::Tanh => x.data().iter().map(|v| v.tanh()).collect(),
            UnaryOp::Log => {
                if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                    return Err(Error::Domain(format!("log of non-positive value {bad}")));
                }
                x.data().iter().map(|v| v.ln()).collect()
            }
            UnaryOp::Neg => x.data().iter().map(|v| -v).collect(),
        };
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Some(out), Op::Unary(op, a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch("elementwise", x.shape(), y.shape()));
        }
        let data: Vec<f64> = match op {
            BinaryOp::Add => x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect(),
            BinaryOp::Mul => x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect(),
        };
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Some(out), Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat(&values, axis)?;
        let rg = self.any_grad(parts);
        Ok(self.push(
            Some(out),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::Contract("stack of zero rows".into()));
        };
        let width = self.value(first).numel();
        let mut data = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.numel() != width {
                return Err(mismatch("stack", self.value(first).shape(), t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows.len(), width, data)?;
        let rg = self.any_grad(rows);
        Ok(self.push(Some(out), Op::Stack(rows.to_vec()), rg))
    }

    /// Row `index` of a matrix, as a vector (embedding lookup).
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        let [rows, cols] = t.shape() else {
            return Err(Error::Dimension(format!(
                "row lookup needs a matrix, got {:?}",
                t.shape()
            )));
        };
        if index >= *rows {
            return Err(Error::Contract(format!(
                "row {index} out of range for {rows} rows"
            )));
        }
        let out = Tensor::vector(t.data()[index * cols..(index + 1) * cols].to_vec());
        let rg = self.any_grad(&[table]);
        Ok(self.push(Some(out), Op::Row { table, index }, rg))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 1 || x.numel() == 0 {
            return Err(Error::Dimension(format!(
                "softmax needs a non-empty vector, got {:?}",
                x.shape()
            )));
        }
        let out = Tensor::vector(tensor::softmax(x.data()));
        let rg = self.any_grad(&[a]);
        Ok(self.push(Some(out), Op::Softmax(a), rg))
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`, via a fused log-softmax.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let x = self.value(logits);
        if x.rank() != 1 || target >= x.numel() {
            return Err(Error::Contract(format!(
                "nll target {target} out of range for logits {:?}",
                x.shape()
            )));
        }
        let log_probs = tensor::log_softmax(x.data());
        let loss = -log_probs[target];
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Some(Tensor::scalar(loss)),
            Op::Nll {
                logits,
                target,
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Some(Tensor::scalar(s)), Op::Sum(a), rg)
    }

    /// Sum of several one-element nodes, as a left fold of `add`.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = terms.split_first() else {
            return Ok(self.constant(Tensor::scalar(0.0)));
        };
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let x = self.value(a);
        let out = Tensor::new(
            x.shape().to_vec(),
            x.data().iter().map(|v| v * factor).collect(),
        )
        .expect("same shape");
        let rg = self.any_grad(&[a]);
        self.push(Some(out), Op::Scale(a, factor), rg)
    }

    /// Back-propagates from the one-element node `loss`.
    ///
    /// Parameter gradients are added into `grads`, leaf-variable gradients into
    /// the graph; nothing else persists between calls, so calling this twice
    /// doubles every accumulated gradient.
    pub fn backward(&mut self, loss: Var, grads: &mut GradStore) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        scratch[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = scratch[i].take() else { continue };
            self.propagate(i, &g, &mut scratch, grads);
        }
        Ok(())
    }

    fn propagate(
        &mut self,
        i: usize,
        g: &[f64],
        scratch: &mut [Option<Vec<f64>>],
        grads: &mut GradStore,
    ) {
        let nodes = &self.nodes;
        let params = self.params;
        let value = |v: Var| node_value(nodes, params, v);
        macro_rules! with_slot {
            ($v:expr, |$s:ident| $body:block) => {
                if let Some($s) = grad_slot(nodes, params, $v, scratch) {
                    $body
                }
            };
        }

        match &nodes[i].op {
            Op::Constant => {}
            Op::Variable => {
                let leaf_grads = &mut self.leaf_grads;
                if leaf_grads.len() < nodes.len() {
                    leaf_grads.resize(nodes.len(), None);
                }
                let shape = nodes[i].value.as_ref().expect("leaf value").shape();
                let acc = leaf_grads[i].get_or_insert_with(|| Tensor::zeros(shape));
                axpy(1.0, g, acc.data_mut());
            }
            Op::Param(id) => axpy(1.0, g, grads.get_mut(*id).data_mut()),
            Op::MatMul(a, b) => {
                let (av, bv) = (value(*a), value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = if bv.rank() == 1 { 1 } else { bv.shape()[1] };
                with_slot!(*a, |da| {
                    // dA = G Bᵀ
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        let drow = &mut da[r * k..(r + 1) * k];
                        if n == 1 {
                            axpy(grow[0], bv.data(), drow);
                        } else {
                            for (p, d) in drow.iter_mut().enumerate() {
                                *d += tensor::dot(grow, &bv.data()[p * n..(p + 1) * n]);
                            }
                        }
                    }
                });
                with_slot!(*b, |db| {
                    // dB = Aᵀ G
                    for r in 0..m {
                        let arow = &av.data()[r * k..(r + 1) * k];
                        if n == 1 {
                            axpy(g[r], arow, db);
                        } else {
                            for (p, &a_rp) in arow.iter().enumerate() {
                                axpy(a_rp, &g[r * n..(r + 1) * n], &mut db[p * n..(p + 1) * n]);
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let shape = value(*a).shape();
                let (m, n) = (shape[0], shape[1]);
                with_slot!(*a, |da| {
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Unary(op, a) => {
                let y = nodes[i].value.as_ref().expect("op value").data();
                let x = value(*a).data();
                with_slot!(*a, |da| {
                    for j in 0..g.len() {
                        da[j] += match op {
                            UnaryOp::Sigmoid => g[j] * y[j] * (1.0 - y[j]),
                            UnaryOp::Tanh => g[j] * (1.0 - y[j] * y[j]),
                            UnaryOp::Log => g[j] / x[j],
                            UnaryOp::Neg => -g[j],
                        };
                    }
                });
            }
            Op::Binary(op, a, b) => match op {
                BinaryOp::Add => {
                    with_slot!(*a, |da| { axpy(1.0, g, da) });
                    with_slot!(*b, |db| { axpy(1.0, g, db) });
                }
                BinaryOp::Mul => {
                    let (av, bv) = (value(*a).data(), value(*b).data());
                    with_slot!(*a, |da| {
                        for j in 0..g.len() {
                            da[j] += g[j] * bv[j];
                        }
                    });
                    with_slot!(*b, |db| {
                        for j in 0..g.len() {
                            db[j] += g[j] * av[j];
                        }
                    });
                }
            },
            Op::Concat { parts, axis } => {
                let out_shape = nodes[i].value.as_ref().expect("op value").shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let full = out_shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let pv = value(p);
                    if pv.numel() == 0 {
                        continue;
                    }
                    let width = pv.shape()[*axis] * inner;
                    with_slot!(p, |dp| {
                        for o in 0..outer {
                            let src = &g[o * full + offset..o * full + offset + width];
                            axpy(1.0, src, &mut dp[o * width..(o + 1) * width]);
                        }
                    });
                    offset += width;
                }
            }
            Op::Stack(rows) => {
                let width = value(rows[0]).numel();
                for (r, &row) in rows.iter().enumerate() {
                    with_slot!(row, |dr| {
                        axpy(1.0, &g[r * width..(r + 1) * width], dr)
                    });
                }
            }
            Op::Row { table, index } => {
                let cols = value(*table).shape()[1];
                with_slot!(*table, |dt| {
                    axpy(1.0, g, &mut dt[index * cols..(index + 1) * cols])
                });
            }
            Op::Softmax(a) => {
                let y = nodes[i].value.as_ref().expect("op value").data();
                let gy = tensor::dot(g, y);
                with_slot!(*a, |da| {
                    for j in 0..y.len() {
                        da[j] += y[j] * (g[j] - gy);
                    }
                });
            }
            Op::Nll {
                logits,
                target,
                probs,
            } => {
                with_slot!(*logits, |dl| {
                    axpy(g[0], probs, dl);
                    dl[*target] -= g[0];
                });
            }
            Op::Sum(a) => {
                with_slot!(*a, |da| {
                    da.iter_mut().for_each(|v| *v += g[0])
                });
            }
            Op::Scale(a, factor) => {
                with_slot!(*a, |da| { axpy(*factor, g, da) });
            }
        }
    }
}

fn node_value<'a>(nodes: &'a [Node], params: &'a ParamSet, v: Var) -> &'a Tensor {
    match (&nodes[v.0].value, &nodes[v.0].op) {
        (Some(t), _) => t,
        (None, Op::Param(id)) => params.value(*id),
        (None, _) => unreachable!("only parameter leaves borrow their value"),
    }
}

/// The gradient accumulator of `v`, or `None` when `v` needs no gradient.
fn grad_slot<'s>(
    nodes: &[Node],
    params: &ParamSet,
    v: Var,
    scratch: &'s mut [Option<Vec<f64>>],
) -> Option<&'s mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = node_value(nodes, params, v).numel();
    Some(scratch[v.0].get_or_insert_with(|| vec![0.0; n]))
}
