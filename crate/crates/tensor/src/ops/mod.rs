//! Differentiable operators. Each submodule adds forward methods on
//! [`Var`](crate::Var) and the matching adjoint rule.

mod attention;
mod conv;
mod elementwise;
mod linear;
mod reduce;
mod shape;
mod softmax;

use std::rc::Rc;

use crate::scalar::Scalar;
use crate::tape::Node;
use crate::tensor::Tensor;

pub use conv::{conv1d_reference, conv2d_reference};
pub use elementwise::BinaryKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryKind {
    Relu,
    LeakyRelu,
    Elu,
    Log,
    Clamp,
}

/// Coarse operator family, used for fault injection and diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Binary,
    Affine,
    Unary,
    L2Normalize,
    Softmax,
    Reduce,
    Reshape,
    Permute,
    Slice,
    Concat,
    WindowMean,
    Pick,
    Linear,
    Conv2d,
    Conv1d,
    GraphAttention,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AxisSplit {
    pub outer: usize,
    pub n: usize,
    pub inner: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv2dGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv1dGeom {
    pub batch: usize,
    pub cin: usize,
    pub t: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    pub ot: usize,
}

pub(crate) enum Op<S> {
    Leaf,
    Binary { kind: BinaryKind, a: usize, b: usize, bmap: Option<Rc<Vec<usize>>> },
    Affine { a: usize, mul: f64 },
    Unary { kind: UnaryKind, a: usize, p0: f64, p1: f64 },
    L2Normalize { a: usize, split: AxisSplit, norms: Vec<S> },
    Softmax { a: usize, split: AxisSplit },
    SumAxis { a: usize, split: AxisSplit, mean: bool },
    SumAll { a: usize, mean: bool },
    Reshape { a: usize },
    Permute { a: usize, perm: Vec<usize> },
    Slice { a: usize, split: AxisSplit, start: usize, len: usize },
    Concat { inputs: Vec<(usize, usize)>, outer: usize, inner: usize, total: usize },
    WindowMean { a: usize, split: AxisSplit, window: usize },
    Pick { a: usize, classes: usize, indices: Vec<usize> },
    Linear { x: usize, w: usize, b: Option<usize>, rows: usize, din: usize, dout: usize },
    Conv2d { x: usize, k: usize, b: Option<usize>, g: Conv2dGeom },
    Conv1d { x: usize, k: usize, b: Option<usize>, g: Conv1dGeom },
    GraphAttention(Box<attention::AttentionSaved<S>>),
}

impl<S> Op<S> {
    pub(crate) fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Binary { .. } => OpKind::Binary,
            Op::Affine { .. } => OpKind::Affine,
            Op::Unary { .. } => OpKind::Unary,
            Op::L2Normalize { .. } => OpKind::L2Normalize,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::SumAxis { .. } | Op::SumAll { .. } => OpKind::Reduce,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
            Op::Slice { .. } => OpKind::Slice,
            Op::Concat { .. } => OpKind::Concat,
            Op::WindowMean { .. } => OpKind::WindowMean,
            Op::Pick { .. } => OpKind::Pick,
            Op::Linear { .. } => OpKind::Linear,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Conv1d { .. } => OpKind::Conv1d,
            Op::GraphAttention(_) => OpKind::GraphAttention,
        }
    }
}

/// Adjoint buffer for `id`, created on first use; `None` when the node
/// does not need a gradient.
pub(crate) fn acc<'a, S: Scalar>(
    adj: &'a mut [Option<Vec<S>>],
    nodes: &[Node<S>],
    id: usize,
) -> Option<&'a mut Vec<S>> {
    let node = &nodes[id];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.numel();
    Some(adj[id].get_or_insert_with(|| vec![S::zero(); n]))
}

pub(crate) fn val<S>(nodes: &[Node<S>], id: usize) -> &Tensor<S> {
    &nodes[id].value
}

pub(crate) fn backward<S: Scalar>(
    op: &Op<S>,
    nodes: &[Node<S>],
    out: &Tensor<S>,
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    match op {
        Op::Leaf => {}
        Op::Binary { kind, a, b, bmap } => {
            elementwise::binary_backward(*kind, *a, *b, bmap.as_deref(), nodes, g, adj)
        }
        Op::Affine { a, mul } => elementwise::affine_backward(*a, *mul, nodes, g, adj),
        Op::Unary { kind, a, p0, p1 } => {
            elementwise::unary_backward(*kind, *a, *p0, *p1, nodes, out, g, adj)
        }
        Op::L2Normalize { a, split, norms } => {
            softmax::l2_normalize_backward(*a, *split, norms, nodes, out, g, adj)
        }
        Op::Softmax { a, split } => softmax::softmax_backward(*a, *split, nodes, out, g, adj),
        Op::SumAxis { a, split, mean } => reduce::sum_axis_backward(*a, *split, *mean, nodes, g, adj),
        Op::SumAll { a, mean } => reduce::sum_all_backward(*a, *mean, nodes, g, adj),
        Op::Reshape { a } => shape::reshape_backward(*a, nodes, g, adj),
        Op::Permute { a, perm } => shape::permute_backward(*a, perm, nodes, g, adj),
        Op::Slice { a, split, start, len } => {
            shape::slice_backward(*a, *split, *start, *len, nodes, g, adj)
        }
        Op::Concat { inputs, outer, inner, total } => {
            shape::concat_backward(inputs, *outer, *inner, *total, nodes, g, adj)
        }
        Op::WindowMean { a, split, window } => {
            reduce::window_mean_backward(*a, *split, *window, nodes, g, adj)
        }
        Op::Pick { a, classes, indices } => shape::pick_backward(*a, *classes, indices, nodes, g, adj),
        Op::Linear { x, w, b, rows, din, dout } => {
            linear::linear_backward(*x, *w, *b, *rows, *din, *dout, nodes, g, adj)
        }
        Op::Conv2d { x, k, b, g: geom } => conv::conv2d_backward(*x, *k, *b, *geom, nodes, g, adj),
        Op::Conv1d { x, k, b, g: geom } => conv::conv1d_backward(*x, *k, *b, *geom, nodes, g, adj),
        Op::GraphAttention(saved) => attention::attention_backward(saved, nodes, g, adj),
    }
}
