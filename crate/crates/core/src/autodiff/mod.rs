//! Define-by-run reverse-mode automatic differentiation on `f64` tensors.
//!
//! A [`Tape`] records one forward computation as an append-only list of
//! nodes; [`Tape::backward`] replays it in reverse to accumulate gradients
//! with respect to every leaf created through [`Tape::param`]. Tapes are
//! rebuilt for every forward pass and are single-threaded by design; run
//! independent tapes on separate threads for parallelism.
//!
//! ```
//! use srlfi::autodiff::Tape;
//! use srlfi::tensor::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
//! let y = x.mul(&x).unwrap().sum().unwrap(); // sum of squares
//! let grads = tape.backward(&y).unwrap();
//! assert_eq!(grads.get(&x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod check;
mod ops;

pub use check::{gradient_check, GradCheckReport};

use crate::tensor::Tensor;
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use thiserror::Error;

/// Index of a node on its tape.
pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: invalid operand of shape {shape:?}: {detail}")]
    InvalidOperand { op: &'static str, shape: Vec<usize>, detail: String },
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("operands belong to different tapes")]
    TapeMismatch,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf { requires_grad: bool },
    MatMul,
    Add,
    Sub,
    Mul,
    /// Elementwise x^exponent. `grad_eps` shifts the base in the backward
    /// pass only: d/dx = exponent * (x + grad_eps)^(exponent-1). A positive
    /// value keeps gradients finite at x = 0 without biasing values.
    PowScalar { exponent: f64, grad_eps: f64 },
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu { slope: f64 },
    Sum,
    Mean,
    /// Concatenation along `axis`; `split` is the extent of the first
    /// operand along that axis.
    Concat { axis: usize, split: usize },
    Broadcast,
    PairwiseSqDist,
}

struct Node {
    op: Op,
    parents: [NodeId; 2],
    n_parents: usize,
    value: Tensor,
    needs_grad: bool,
}

/// Records one forward computation. Cloning is shallow: clones share the
/// same node list.
#[derive(Clone, Default)]
pub struct Tape {
    nodes: Rc<RefCell<Vec<Node>>>,
}

/// Handle to a value on a tape.
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: NodeId,
    shape: Vec<usize>,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape).finish()
    }
}

/// Gradients keyed by leaf node, defined exactly for the leaves created via
/// [`Tape::param`]. Leaves that do not participate in the computation get
/// zero gradients.
pub struct GradientMap {
    grads: HashMap<NodeId, Tensor>,
}

impl GradientMap {
    pub fn get(&self, v: &Var) -> Option<&Tensor> {
        self.grads.get(&v.id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds a leaf that participates in gradients.
    pub fn param(&self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Adds a leaf treated as a constant.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn constant_scalar(&self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    fn push_leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        let shape = value.shape().to_vec();
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            op: Op::Leaf { requires_grad },
            parents: [0, 0],
            n_parents: 0,
            value,
            needs_grad: requires_grad,
        });
        Var { tape: self.clone(), id, shape }
    }

    fn push_node(&self, op: Op, parents: &[&Var], value: Tensor) -> Var {
        let shape = value.shape().to_vec();
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        let needs_grad = parents.iter().any(|p| nodes[p.id].needs_grad);
        let mut ps = [0, 0];
        for (slot, p) in ps.iter_mut().zip(parents) {
            *slot = p.id;
        }
        nodes.push(Node { op, parents: ps, n_parents: parents.len(), value, needs_grad });
        Var { tape: self.clone(), id, shape }
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }

    /// Reverse pass from a scalar root. Returns gradients for every
    /// [`Tape::param`] leaf on the tape.
    pub fn backward(&self, root: &Var) -> Result<GradientMap, AdError> {
        if !self.same_tape(&root.tape) {
            return Err(AdError::TapeMismatch);
        }
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.numel() != 1 {
            return Err(AdError::NonScalarRoot { shape: root.shape.clone() });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[root.id].needs_grad {
            grads[root.id] = Some(vec![1.0]);
        }
        for id in (0..=root.id).rev() {
            if matches!(nodes[id].op, Op::Leaf { .. }) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let mut parent_contrib: [Option<Vec<f64>>; 2] = [None, None];
            {
                let want = |slot: usize| {
                    slot < node.n_parents && nodes[node.parents[slot]].needs_grad
                };
                let pval =
                    |slot: usize| -> &Tensor { &nodes[node.parents[slot]].value };
                accumulate(node, &g, want, pval, &mut parent_contrib);
            }
            for (slot, contrib) in parent_contrib.into_iter().enumerate() {
                let Some(c) = contrib else { continue };
                let pid = node.parents[slot];
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&c) {
                            *a += v;
                        }
                    }
                    None => grads[pid] = Some(c),
                }
            }
        }
        let mut out = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if let Op::Leaf { requires_grad: true } = node.op {
                let t = match grads[id].take() {
                    Some(g) => Tensor::new(node.value.shape().to_vec(), g),
                    None => Tensor::zeros(node.value.shape()),
                };
                out.insert(id, t);
            }
        }
        Ok(GradientMap { grads: out })
    }
}

/// Dispatches one node's gradient to its parents.
fn accumulate<'a>(
    node: &Node,
    g: &[f64],
    want: impl Fn(usize) -> bool,
    pval: impl Fn(usize) -> &'a Tensor,
    out: &mut [Option<Vec<f64>>; 2],
) {
    let ensure = |out: &mut [Option<Vec<f64>>; 2], slot: usize, numel: usize| {
        if out[slot].is_none() {
            out[slot] = Some(vec![0.0; numel]);
        }
    };
    match node.op {
        Op::Leaf { .. } => {}
        Op::Add => {
            for slot in 0..2 {
                if want(slot) {
                    ensure(out, slot, g.len());
                    let acc = out[slot].as_mut().unwrap();
                    for (a, gv) in acc.iter_mut().zip(g) {
                        *a += gv;
                    }
                }
            }
        }
        Op::Sub => {
            for slot in 0..2 {
                if want(slot) {
                    ensure(out, slot, g.len());
                    let acc = out[slot].as_mut().unwrap();
                    let sign = if slot == 0 { 1.0 } else { -1.0 };
                    for (a, gv) in acc.iter_mut().zip(g) {
                        *a += sign * gv;
                    }
                }
            }
        }
        Op::Mul => {
            for slot in 0..2 {
                if want(slot) {
                    ensure(out, slot, g.len());
                    let other = pval(1 - slot);
                    let acc = out[slot].as_mut().unwrap();
                    for ((a, gv), ov) in acc.iter_mut().zip(g).zip(other.iter()) {
                        *a += gv * ov;
                    }
                }
            }
        }
        Op::MatMul => {
            let a = pval(0);
            let b = pval(1);
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            if want(0) {
                ensure(out, 0, m * k);
                ops::matmul_grad_a(m, k, n, g, b.data(), out[0].as_mut().unwrap());
            }
            if want(1) {
                ensure(out, 1, k * n);
                ops::matmul_grad_b(m, k, n, a.data(), g, out[1].as_mut().unwrap());
            }
        }
        Op::PowScalar { exponent, grad_eps } => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), xv) in acc.iter_mut().zip(g).zip(x.iter()) {
                    *a += gv * exponent * (xv + grad_eps).powf(exponent - 1.0);
                }
            }
        }
        Op::Exp => {
            if want(0) {
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), yv) in acc.iter_mut().zip(g).zip(node.value.iter()) {
                    *a += gv * yv;
                }
            }
        }
        Op::Log => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), xv) in acc.iter_mut().zip(g).zip(x.iter()) {
                    *a += gv / xv;
                }
            }
        }
        Op::Tanh => {
            if want(0) {
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), yv) in acc.iter_mut().zip(g).zip(node.value.iter()) {
                    *a += gv * (1.0 - yv * yv);
                }
            }
        }
        Op::Sigmoid => {
            if want(0) {
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), yv) in acc.iter_mut().zip(g).zip(node.value.iter()) {
                    *a += gv * yv * (1.0 - yv);
                }
            }
        }
        Op::Relu => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), xv) in acc.iter_mut().zip(g).zip(x.iter()) {
                    if *xv > 0.0 {
                        *a += gv;
                    }
                }
            }
        }
        Op::LeakyRelu { slope } => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, g.len());
                let acc = out[0].as_mut().unwrap();
                for ((a, gv), xv) in acc.iter_mut().zip(g).zip(x.iter()) {
                    *a += gv * if *xv > 0.0 { 1.0 } else { slope };
                }
            }
        }
        Op::Sum => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, x.numel());
                let acc = out[0].as_mut().unwrap();
                for a in acc.iter_mut() {
                    *a += g[0];
                }
            }
        }
        Op::Mean => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, x.numel());
                let scale = g[0] / x.numel() as f64;
                let acc = out[0].as_mut().unwrap();
                for a in acc.iter_mut() {
                    *a += scale;
                }
            }
        }
        Op::Concat { axis, split } => {
            let a = pval(0);
            let b = pval(1);
            if a.rank() == 1 || axis == 0 {
                // Contiguous split.
                if want(0) {
                    ensure(out, 0, a.numel());
                    let acc = out[0].as_mut().unwrap();
                    for (av, gv) in acc.iter_mut().zip(&g[..a.numel()]) {
                        *av += gv;
                    }
                }
                if want(1) {
                    ensure(out, 1, b.numel());
                    let acc = out[1].as_mut().unwrap();
                    for (bv, gv) in acc.iter_mut().zip(&g[a.numel()..]) {
                        *bv += gv;
                    }
                }
            } else {
                // Column split of a rank-2 result.
                let rows = a.rows();
                let ca = split;
                let cb = b.cols();
                let ctot = ca + cb;
                if want(0) {
                    ensure(out, 0, a.numel());
                    let acc = out[0].as_mut().unwrap();
                    for r in 0..rows {
                        for c in 0..ca {
                            acc[r * ca + c] += g[r * ctot + c];
                        }
                    }
                }
                if want(1) {
                    ensure(out, 1, b.numel());
                    let acc = out[1].as_mut().unwrap();
                    for r in 0..rows {
                        for c in 0..cb {
                            acc[r * cb + c] += g[r * ctot + ca + c];
                        }
                    }
                }
            }
        }
        Op::Broadcast => {
            if want(0) {
                let x = pval(0);
                ensure(out, 0, x.numel());
                ops::broadcast_grad(x.numel(), g, out[0].as_mut().unwrap());
            }
        }
        Op::PairwiseSqDist => {
            let a = pval(0);
            let b = pval(1);
            let (m, p) = (a.rows(), a.cols());
            let k = b.rows();
            // Both slots are filled; unused ones are dropped by the caller.
            ensure(out, 0, m * p);
            ensure(out, 1, k * p);
            let (left, right) = out.split_at_mut(1);
            ops::pairwise_sqdist_grads(
                m,
                k,
                p,
                a.data(),
                b.data(),
                g,
                left[0].as_mut().unwrap(),
                right[0].as_mut().unwrap(),
            );
            if !want(0) {
                out[0] = None;
            }
            if !want(1) {
                out[1] = None;
            }
        }
    }
}

impl Var {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// A copy of the node's value.
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    /// The value of a one-element node.
    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.id].value.item()
    }

    fn check_same_tape(&self, other: &Var, op: &'static str) -> Result<(), AdError> {
        if self.tape.same_tape(&other.tape) {
            Ok(())
        } else {
            let _ = op;
            Err(AdError::TapeMismatch)
        }
    }

    fn elementwise_pair(&self, other: &Var, op: &'static str) -> Result<(), AdError> {
        self.check_same_tape(other, op)?;
        if self.shape != other.shape {
            return Err(AdError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Var) -> Result<Var, AdError> {
        self.elementwise_pair(other, "add")?;
        let v = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            Tensor::new(
                self.shape.clone(),
                a.iter().zip(b.iter()).map(|(x, y)| x + y).collect(),
            )
        };
        Ok(self.tape.push_node(Op::Add, &[self, other], v))
    }

    pub fn sub(&self, other: &Var) -> Result<Var, AdError> {
        self.elementwise_pair(other, "subtract")?;
        let v = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            Tensor::new(
                self.shape.clone(),
                a.iter().zip(b.iter()).map(|(x, y)| x - y).collect(),
            )
        };
        Ok(self.tape.push_node(Op::Sub, &[self, other], v))
    }

    pub fn mul(&self, other: &Var) -> Result<Var, AdError> {
        self.elementwise_pair(other, "elementwise-multiply")?;
        let v = {
            let nodes = self.tape.nodes.borrow();
            let a = &nodes[self.id].value;
            let b = &nodes[other.id].value;
            Tensor::new(
                self.shape.clone(),
                a.iter().zip(b.iter()).map(|(x, y)| x * y).collect(),
            )
        };
        Ok(self.tape.push_node(Op::Mul, &[self, other], v))
    }

    pub fn matmul(&self, other: &Var) -> Result<Var, AdError> {
        self.check_same_tape(other, "matmul")?;
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(AdError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::matrix(m, n, ops::matmul(m, k, n, nodes[self.id].value.data(), nodes[other.id].value.data()))
        };
        Ok(self.tape.push_node(Op::MatMul, &[self, other], v))
    }

    /// Elementwise power with an exact forward value. See [`Var::powf_smoothed`]
    /// for the variant used near zero.
    pub fn powf(&self, exponent: f64) -> Result<Var, AdError> {
        self.pow_inner(exponent, 0.0)
    }

    /// Elementwise power whose backward pass evaluates the derivative at
    /// `x + grad_eps`, keeping gradients finite at x = 0 when the exponent is
    /// below one. Forward values are exact.
    pub fn powf_smoothed(&self, exponent: f64, grad_eps: f64) -> Result<Var, AdError> {
        self.pow_inner(exponent, grad_eps)
    }

    fn pow_inner(&self, exponent: f64, grad_eps: f64) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            let fractional = exponent.fract() != 0.0;
            for &xv in x.iter() {
                if fractional && xv < 0.0 {
                    return Err(AdError::Domain {
                        op: "scalar-power",
                        detail: format!("negative base {xv} with non-integer exponent {exponent}"),
                    });
                }
                if exponent < 0.0 && xv == 0.0 {
                    return Err(AdError::Domain {
                        op: "scalar-power",
                        detail: format!("zero base with negative exponent {exponent}"),
                    });
                }
            }
            Tensor::new(self.shape.clone(), x.iter().map(|xv| xv.powf(exponent)).collect())
        };
        Ok(self
            .tape
            .push_node(Op::PowScalar { exponent, grad_eps }, &[self], v))
    }

    pub fn exp(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::new(self.shape.clone(), nodes[self.id].value.iter().map(|x| x.exp()).collect())
        };
        Ok(self.tape.push_node(Op::Exp, &[self], v))
    }

    pub fn ln(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            for &xv in x.iter() {
                if xv <= 0.0 {
                    return Err(AdError::Domain {
                        op: "log",
                        detail: format!("non-positive input {xv}"),
                    });
                }
            }
            Tensor::new(self.shape.clone(), x.iter().map(|x| x.ln()).collect())
        };
        Ok(self.tape.push_node(Op::Log, &[self], v))
    }

    pub fn tanh(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::new(self.shape.clone(), nodes[self.id].value.iter().map(|x| x.tanh()).collect())
        };
        Ok(self.tape.push_node(Op::Tanh, &[self], v))
    }

    pub fn sigmoid(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::new(
                self.shape.clone(),
                nodes[self.id].value.iter().map(|x| ops::sigmoid(*x)).collect(),
            )
        };
        Ok(self.tape.push_node(Op::Sigmoid, &[self], v))
    }

    pub fn relu(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::new(
                self.shape.clone(),
                nodes[self.id].value.iter().map(|x| x.max(0.0)).collect(),
            )
        };
        Ok(self.tape.push_node(Op::Relu, &[self], v))
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::new(
                self.shape.clone(),
                nodes[self.id]
                    .value
                    .iter()
                    .map(|&x| if x > 0.0 { x } else { slope * x })
                    .collect(),
            )
        };
        Ok(self.tape.push_node(Op::LeakyRelu { slope }, &[self], v))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::scalar(nodes[self.id].value.iter().sum())
        };
        Ok(self.tape.push_node(Op::Sum, &[self], v))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&self) -> Result<Var, AdError> {
        let v = {
            let nodes = self.tape.nodes.borrow();
            let x = &nodes[self.id].value;
            Tensor::scalar(x.iter().sum::<f64>() / x.numel() as f64)
        };
        Ok(self.tape.push_node(Op::Mean, &[self], v))
    }

    /// Concatenation along `axis`. Rank-1 operands concatenate along axis 0;
    /// rank-2 operands along axis 0 (rows) or axis 1 (columns).
    pub fn concat(&self, other: &Var, axis: usize) -> Result<Var, AdError> {
        self.check_same_tape(other, "concat")?;
        let mismatch = || AdError::ShapeMismatch {
            op: "concat",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.rank() != other.rank() || axis >= self.rank() {
            return Err(mismatch());
        }
        let nodes = self.tape.nodes.borrow();
        let a = &nodes[self.id].value;
        let b = &nodes[other.id].value;
        let (v, split) = if self.rank() == 1 {
            let mut d = a.data().to_vec();
            d.extend_from_slice(b.data());
            (Tensor::vector(d), a.numel())
        } else if axis == 0 {
            if a.cols() != b.cols() {
                return Err(mismatch());
            }
            let mut d = a.data().to_vec();
            d.extend_from_slice(b.data());
            (Tensor::matrix(a.rows() + b.rows(), a.cols(), d), a.rows())
        } else {
            if a.rows() != b.rows() {
                return Err(mismatch());
            }
            let (r, ca, cb) = (a.rows(), a.cols(), b.cols());
            let mut d = Vec::with_capacity(r * (ca + cb));
            for i in 0..r {
                d.extend_from_slice(a.row(i));
                d.extend_from_slice(b.row(i));
            }
            (Tensor::matrix(r, ca + cb, d), ca)
        };
        drop(nodes);
        Ok(self.tape.push_node(Op::Concat { axis, split }, &[self, other], v))
    }

    /// Broadcasts to `target`, which must have this var's shape as a suffix
    /// (trailing-dimension rule). A vector of length n broadcasts to [m, n].
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Var, AdError> {
        let ok = target.len() >= self.rank()
            && target.len() <= 2
            && target[target.len() - self.rank()..] == self.shape[..];
        if !ok {
            return Err(AdError::ShapeMismatch {
                op: "broadcast",
                lhs: self.shape.clone(),
                rhs: target.to_vec(),
            });
        }
        let numel: usize = target.iter().product();
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::new(target.to_vec(), ops::broadcast_forward(nodes[self.id].value.data(), numel))
        };
        Ok(self.tape.push_node(Op::Broadcast, &[self], v))
    }

    /// Matrix of squared Euclidean distances between the rows of `self`
    /// (m x p) and the rows of `other` (k x p), shaped m x k.
    pub fn pairwise_sqdist(&self, other: &Var) -> Result<Var, AdError> {
        self.check_same_tape(other, "pairwise-squared-distance")?;
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[1] {
            return Err(AdError::ShapeMismatch {
                op: "pairwise-squared-distance",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (m, p, k) = (self.shape[0], self.shape[1], other.shape[0]);
        let v = {
            let nodes = self.tape.nodes.borrow();
            Tensor::matrix(
                m,
                k,
                ops::pairwise_sqdist(m, k, p, nodes[self.id].value.data(), nodes[other.id].value.data()),
            )
        };
        Ok(self.tape.push_node(Op::PairwiseSqDist, &[self, other], v))
    }

    // The helpers below are compositions of the primitive ops above.

    /// Multiplies every element by a constant.
    pub fn scale(&self, c: f64) -> Result<Var, AdError> {
        let k = self.tape.constant(Tensor::full(&self.shape, c));
        self.mul(&k)
    }

    /// Adds a constant to every element.
    pub fn add_scalar(&self, c: f64) -> Result<Var, AdError> {
        let k = self.tape.constant(Tensor::full(&self.shape, c));
        self.add(&k)
    }

    /// 1 - x elementwise.
    pub fn one_minus(&self) -> Result<Var, AdError> {
        let ones = self.tape.constant(Tensor::full(&self.shape, 1.0));
        ones.sub(self)
    }

    /// Clamps into [eps, 1 - eps] via relu compositions; the gradient passes
    /// through unchanged strictly inside the interval and is zero outside.
    pub fn clamp_unit(&self, eps: f64) -> Result<Var, AdError> {
        let lo = self.tape.constant(Tensor::full(&self.shape, eps));
        let hi = self.tape.constant(Tensor::full(&self.shape, 1.0 - eps));
        let floored = self.sub(&lo)?.relu()?.add(&lo)?;
        hi.sub(&hi.sub(&floored)?.relu()?)
    }
}
