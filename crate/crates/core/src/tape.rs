//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node holding its output value. Nodes whose
//! inputs never require a gradient are stored as constants, so inference
//! on a tape records no backward state.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::{self, LrnParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

/// Gradients keyed by parameter name.
pub type GradientMap<T = f32> = BTreeMap<String, Tensor<T>>;

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, T),
    AddScalar(Var, T),
    Square(Var),
    Sqrt(Var),
    MaxScalar(Var, T),
    Sum(Var),
    Mean(Var),
    RowNorm(Var),
    MatMul(Var, Var),
    Reshape(Var),
    Dense { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    Lrn { x: Var, params: LrnParams, scale: Vec<T> },
    Dropout { x: Var, mask: Vec<T> },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![*a, *b],
            ScalarMul(a, _)
            | AddScalar(a, _)
            | Square(a)
            | Sqrt(a)
            | MaxScalar(a, _)
            | Sum(a)
            | Mean(a)
            | RowNorm(a)
            | Reshape(a) => vec![*a],
            Dense { x, w, b } | Conv2d { x, w, b, .. } => vec![*x, *w, *b],
            MaxPool { x, .. } | Lrn { x, .. } | Dropout { x, .. } => vec![*x],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    name: Option<String>,
}

/// Records one forward pass so it can be differentiated once.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Places a tensor on the tape. Gradients are reported for it under
    /// `#<index>` when its `requires_grad` flag is set.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let id = self.nodes.len();
        let requires_grad = value.requires_grad();
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, name: requires_grad.then(|| format!("#{id}")) });
        Var(id)
    }

    /// Places a constant on the tape.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    /// Registers a trainable parameter. Names must be unique per tape.
    pub fn param(&mut self, name: &str, value: Tensor<T>) -> Result<Var> {
        if self.nodes.iter().any(|n| n.name.as_deref() == Some(name)) {
            return Err(Error::InvalidArgument(format!("parameter `{name}` registered twice")));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            value: value.with_requires_grad(true),
            op: Op::Leaf,
            requires_grad: true,
            name: Some(name.to_owned()),
        });
        Ok(Var(id))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let inputs = op.inputs();
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        debug_assert!(
            !inputs.iter().all(|v| self.nodes[v.0].value.is_finite()) || value.is_finite(),
            "non-finite output from finite inputs in {op:?}",
        );
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad, name: None });
        Var(self.nodes.len() - 1)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: fn(Var, Var) -> Op<T>,
    ) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let data: Vec<T> = if x.shape() == y.shape() {
            x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect()
        } else if y.numel() == 1 {
            let q = y.data()[0];
            x.data().iter().map(|&p| f(p, q)).collect()
        } else {
            return Err(Error::shape(name, format!("{:?} vs {:?}", x.shape(), y.shape())));
        };
        let out = x.like(data);
        Ok(self.push(out, op(a, b)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let x = self.value(a);
        let out = x.like(x.data().iter().map(|&v| f(v)).collect());
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |p, q| p + q, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |p, q| p - q, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |p, q| p * q, Op::Mul)
    }

    pub fn scalar_mul(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |v| v * s, Op::ScalarMul(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |v| v + s, Op::AddScalar(a, s))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |v| v * v, Op::Square(a))
    }

    /// Elementwise square root. The derivative at zero is infinite; use
    /// [`Tape::row_norm`] for distances that may vanish.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.sqrt(), Op::Sqrt(a))
    }

    /// `max(a, s)` elementwise; the gradient passes only where `a > s`.
    pub fn max_with_scalar(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |v| if v <= s { s } else { v }, Op::MaxScalar(a, s))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let total: T = x.data().iter().copied().sum();
        let mean = total / T::cast(x.numel() as f64);
        self.push(Tensor::scalar(mean), Op::Mean(a))
    }

    /// Euclidean norm of every row of a rank-2 tensor. The gradient at a
    /// zero row is taken as zero.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let [rows, cols] = rank2("row_norm", x)?;
        let norms: Vec<T> = x.data().chunks(cols).map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
        Ok(self.push(Tensor::from_parts(vec![rows], norms), Op::RowNorm(a)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let [m, k] = rank2("matmul", x)?;
        let [k2, n] = rank2("matmul", y)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{:?} · {:?}", x.shape(), y.shape())));
        }
        let mut out = vec![T::zero(); m * n];
        linalg::gemm_nn(x.data(), y.data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?.with_requires_grad(false);
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Flattens every axis after the first.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let shape = self.value(a).shape();
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(a, &[n, rest])
    }

    /// Gradient of a single-element `loss` with respect to every parameter
    /// and every leaf that requires a gradient.
    ///
    /// A loss that does not depend on any such tensor yields an empty map.
    pub fn backward(&self, loss: Var) -> Result<GradientMap<T>> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must have one element, shape is {:?}", root.value.shape()),
            ));
        }
        let mut out = GradientMap::new();
        if !root.requires_grad {
            return Ok(out);
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if let Op::Leaf = node.op {
                if let Some(name) = &node.name {
                    out.insert(name.clone(), node.value.like(grad));
                }
                continue;
            }
            for (input, g) in self.node_backward(&node.op, &node.value, &grad) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    slot => *slot = Some(g),
                }
            }
        }

        // Parameters the loss does not reach still get an (all-zero) entry.
        for node in &self.nodes {
            if let (Op::Leaf, Some(name)) = (&node.op, &node.name) {
                out.entry(name.clone()).or_insert_with(|| node.value.like(vec![T::zero(); node.value.numel()]));
            }
        }
        Ok(out)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn node_backward(&self, op: &Op<T>, out: &Tensor<T>, grad: &[T]) -> Vec<(Var, Vec<T>)> {
        let val = |v: Var| self.value(v).data();
        let map =
            |v: Var, f: &dyn Fn(T, T) -> T| -> Vec<T> { val(v).iter().zip(grad).map(|(&x, &g)| f(x, g)).collect() };
        match *op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(a, grad.to_vec()), (b, self.reduce_to(b, grad.to_vec()))],
            Op::Sub(a, b) => {
                let neg = grad.iter().map(|&g| -g).collect();
                vec![(a, grad.to_vec()), (b, self.reduce_to(b, neg))]
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                if x.shape() == y.shape() {
                    let ga = y.data().iter().zip(grad).map(|(&q, &g)| q * g).collect();
                    let gb = x.data().iter().zip(grad).map(|(&p, &g)| p * g).collect();
                    vec![(a, ga), (b, gb)]
                } else {
                    let q = y.data()[0];
                    let ga = grad.iter().map(|&g| q * g).collect();
                    let gb = x.data().iter().zip(grad).map(|(&p, &g)| p * g).sum();
                    vec![(a, ga), (b, vec![gb])]
                }
            }
            Op::ScalarMul(a, s) => vec![(a, grad.iter().map(|&g| g * s).collect())],
            Op::AddScalar(a, _) | Op::Reshape(a) => vec![(a, grad.to_vec())],
            Op::Square(a) => vec![(a, map(a, &|x, g| T::cast(2.0) * x * g))],
            Op::Sqrt(a) => {
                let half = T::cast(0.5);
                let g = out.data().iter().zip(grad).map(|(&r, &g)| half * g / r).collect();
                vec![(a, g)]
            }
            Op::MaxScalar(a, s) => vec![(a, map(a, &|x, g| if x > s { g } else { T::zero() }))],
            Op::Sum(a) => vec![(a, vec![grad[0]; self.value(a).numel()])],
            Op::Mean(a) => {
                let n = self.value(a).numel();
                vec![(a, vec![grad[0] / T::cast(n as f64); n])]
            }
            Op::RowNorm(a) => {
                let x = self.value(a);
                let cols = x.shape()[1];
                let mut g = vec![T::zero(); x.numel()];
                for (r, (row, g_row)) in x.data().chunks(cols).zip(g.chunks_mut(cols)).enumerate() {
                    let norm = out.data()[r];
                    if norm > T::zero() {
                        let s = grad[r] / norm;
                        for (gi, &xi) in g_row.iter_mut().zip(row) {
                            *gi = xi * s;
                        }
                    }
                }
                vec![(a, g)]
            }
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                let mut res = Vec::new();
                if self.needs(a) {
                    let mut ga = vec![T::zero(); m * k];
                    linalg::gemm_nt(grad, y.data(), &mut ga, m, n, k);
                    res.push((a, ga));
                }
                if self.needs(b) {
                    let mut gb = vec![T::zero(); k * n];
                    linalg::gemm_tn(x.data(), grad, &mut gb, k, m, n);
                    res.push((b, gb));
                }
                res
            }
            Op::Dense { x, w, b } => {
                let (gx, gw, gb) = nn::dense_backward(
                    self.value(x),
                    self.value(w),
                    grad,
                    [self.needs(x), self.needs(w), self.needs(b)],
                );
                collect_grads([(x, gx), (w, gw), (b, gb)])
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = nn::conv2d_backward(
                    self.value(x),
                    self.value(w),
                    grad,
                    stride,
                    pad,
                    [self.needs(x), self.needs(w), self.needs(b)],
                );
                collect_grads([(x, gx), (w, gw), (b, gb)])
            }
            Op::MaxPool { x, ref argmax } => {
                vec![(x, nn::maxpool2d_backward(self.value(x).numel(), argmax, grad))]
            }
            Op::Lrn { x, ref params, ref scale } => vec![(x, nn::lrn_backward(self.value(x), params, scale, grad))],
            Op::Dropout { x, ref mask } => {
                vec![(x, mask.iter().zip(grad).map(|(&m, &g)| m * g).collect())]
            }
        }
    }

    /// Sums a broadcast gradient back down to a scalar operand.
    fn reduce_to(&self, v: Var, grad: Vec<T>) -> Vec<T> {
        if self.value(v).numel() == 1 && grad.len() != 1 {
            vec![grad.into_iter().sum()]
        } else {
            grad
        }
    }
}

fn collect_grads<T, const N: usize>(items: [(Var, Option<Vec<T>>); N]) -> Vec<(Var, Vec<T>)> {
    items.into_iter().filter_map(|(v, g)| g.map(|g| (v, g))).collect()
}

pub(crate) fn rank2<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<[usize; 2]> {
    match *t.shape() {
        [r, c] => Ok([r, c]),
        ref s => Err(Error::shape(op, format!("expected rank 2, got {s:?}"))),
    }
}
