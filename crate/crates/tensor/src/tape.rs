use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::ops::{self, Op, OpKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) struct Node<S> {
    pub value: Rc<Tensor<S>>,
    pub op: Op<S>,
    pub requires_grad: bool,
    /// Accumulated gradient, leaves only.
    pub grad: Option<Vec<S>>,
}

/// Scales the adjoint flowing into every op of one kind during backward.
/// Exists so verification harnesses can prove they catch broken adjoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fault {
    pub kind: OpKind,
    pub factor: f64,
}

/// Wengert list of executed operations. Nodes are appended in execution
/// order, so inputs always precede the nodes that consume them.
///
/// A tape is confined to one thread; build a fresh one per forward pass.
pub struct Tape<S: Scalar = f64> {
    nodes: RefCell<Vec<Node<S>>>,
    fault: Cell<Option<Fault>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, S: Scalar = f64> {
    tape: &'t Tape<S>,
    id: usize,
}

impl<S: Scalar> fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.shape())
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), fault: Cell::new(None) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor<S>, requires_grad: bool) -> Var<'_, S> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&self, value: Tensor<S>) -> Var<'_, S> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<S>) -> Var<'_, S> {
        self.leaf(value, false)
    }

    pub fn inject_fault(&self, fault: Option<Fault>) {
        self.fault.set(fault);
    }

    pub(crate) fn push(&self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var<'_, S> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: Rc::new(value), op, requires_grad, grad: None });
        Var { tape: self, id }
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<S>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Accumulated gradient of a leaf, `None` if no backward pass reached it.
    pub fn grad(&self, var: Var<'_, S>) -> Option<Tensor<S>> {
        let nodes = self.nodes.borrow();
        let node = &nodes[var.id];
        node.grad.as_ref().map(|g| {
            Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape matches value")
        })
    }

    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            if let Some(g) = node.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = S::zero());
            }
        }
    }

    /// Propagates adjoints from a one-element output to every leaf that
    /// requires a gradient. Repeated calls accumulate.
    pub fn backward(&self, output: Var<'_, S>) -> Result<()> {
        if !std::ptr::eq(output.tape, self) {
            return Err(TensorError::Usage("backward on a var from another tape".into()));
        }
        let mut leaf_grads = Vec::new();
        {
            let nodes = self.nodes.borrow();
            let root = &nodes[output.id];
            if root.value.numel() != 1 {
                return Err(TensorError::Usage(format!(
                    "backward needs a one-element output, got shape {:?}",
                    root.value.shape()
                )));
            }
            let mut adj: Vec<Option<Vec<S>>> = vec![None; output.id + 1];
            adj[output.id] = Some(vec![S::one()]);
            let fault = self.fault.get();
            for id in (0..=output.id).rev() {
                let Some(mut g) = adj[id].take() else { continue };
                let node = &nodes[id];
                if !node.requires_grad {
                    continue;
                }
                if let Op::Leaf = node.op {
                    leaf_grads.push((id, g));
                    continue;
                }
                if let Some(f) = fault {
                    if f.kind == node.op.kind() {
                        let factor = S::of(f.factor);
                        g.iter_mut().for_each(|x| *x *= factor);
                    }
                }
                ops::backward(&node.op, &nodes, &node.value, &g, &mut adj);
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in leaf_grads {
            let node = &mut nodes[id];
            match node.grad.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<S> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<S>> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.value().numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    pub fn grad(&self) -> Option<Tensor<S>> {
        self.tape.grad(*self)
    }

    pub(crate) fn same_tape(&self, other: &Var<'t, S>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::Usage("operands recorded on different tapes".into()))
        }
    }
}
