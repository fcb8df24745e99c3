//! Dense `f64` tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable value plus an optional gradient buffer. Every
//! operation on tensors that require grad records an [`OpNode`] pointing at
//! its inputs; [`Tensor::backward`] walks that graph in reverse creation order
//! and accumulates gradients into every reachable tensor that requires grad.
//!
//! Graphs are cheap, single-threaded (`Rc`) and rebuilt on every step. Model
//! parameters live outside the graph as plain vectors and are bound to fresh
//! leaf tensors for each forward pass.

mod conv;
mod gemm;
pub mod io;
mod norm;
mod ops;

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

pub(crate) use gemm::gemm;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Operation recorded in the autodiff graph, with whatever the backward pass
/// needs beyond the input and output values.
#[derive(Debug, Clone)]
pub(crate) enum OpKind {
    Add,
    Sub,
    Mul,
    AddScalar,
    MulScalar(f64),
    MatMul,
    Linear,
    Conv3d { stride: [usize; 3], padding: [usize; 3] },
    AvgPool3d { kernel: [usize; 3] },
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Abs,
    Sum,
    Mean,
    L2Norm,
    MeanAxis { axis: usize },
    Softmax,
    LogSoftmax,
    Reshape,
    Permute { perm: Vec<usize> },
    Select { axis: usize, index: usize },
    ChannelMean,
    ChannelVar,
    ChannelNorm { eps: f64 },
}

pub(crate) struct OpNode {
    pub(crate) kind: OpKind,
    pub(crate) inputs: Vec<Tensor>,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    op: RefCell<Option<OpNode>>,
}

/// Reference-counted handle to a tensor value in an autodiff graph.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.0.op.borrow().as_ref().map(|o| format!("{:?}", o.kind));
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &op)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Option<OpNode>) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            op: RefCell::new(op),
        }))
    }

    /// Creates a constant tensor. Fails when `data.len()` disagrees with `shape`.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Tensor> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} holds {} elements, got {}", shape, numel(&shape), data.len()),
            ));
        }
        Ok(Tensor::build(shape, data, false, None))
    }

    /// Creates a leaf that accumulates gradients.
    pub fn param(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::new(shape, data)?;
        Ok(Tensor::build(t.0.shape.clone(), t.0.data.clone(), true, None))
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::build(Vec::new(), vec![value], false, None)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Tensor {
        let shape = shape.into();
        let n = numel(&shape);
        Tensor::build(shape, vec![0.0; n], false, None)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Tensor {
        let shape = shape.into();
        let n = numel(&shape);
        Tensor::build(shape, vec![value; n], false, None)
    }

    /// Result of an operation; records the graph only when an input needs it.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, kind: OpKind, inputs: Vec<Tensor>) -> Tensor {
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let op = requires_grad.then_some(OpNode { kind, inputs });
        Tensor::build(shape, data, requires_grad, op)
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// Accumulated gradient, if a backward pass has reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    fn accumulate(&self, g: Vec<f64>) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g),
        }
    }

    /// Reverse-mode pass from a scalar root. Gradients are added to whatever
    /// the reachable tensors already hold; the recorded graph is released
    /// afterwards, so each graph supports exactly one backward pass.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 || !self.requires_grad() {
            return Err(Error::NonScalarRoot(self.shape().to_vec()));
        }

        // Inputs are always created before their outputs, so descending id
        // order is a reverse topological order.
        let mut nodes: Vec<Tensor> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.0.id) {
                continue;
            }
            if let Some(op) = t.0.op.borrow().as_ref() {
                stack.extend(op.inputs.iter().filter(|i| i.requires_grad()).cloned());
            }
            nodes.push(t);
        }
        nodes.sort_by_key(|t| std::cmp::Reverse(t.0.id));

        self.accumulate(vec![1.0]);
        for node in &nodes {
            let Some(op) = node.0.op.borrow_mut().take() else {
                continue;
            };
            let Some(g) = node.grad() else { continue };
            let grads = ops::backward(&op.kind, &op.inputs, node, &g);
            for (input, grad) in op.inputs.iter().zip(grads) {
                if let Some(grad) = grad.filter(|_| input.requires_grad()) {
                    input.accumulate(grad);
                }
            }
        }
        Ok(())
    }
}
