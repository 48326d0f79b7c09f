use std::rc::Rc;

use super::{acc, val, Op, UnaryKind};
use crate::error::{dim_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// For each element of `a_shape`, the linear index of the `b_shape`
/// element it pairs with. `b_shape` is right-aligned against `a_shape`
/// and each of its extents must equal the matching one or be 1, which
/// covers an `[H,W]` mask over `[C,H,W]` and `[B,1,H,W]` over `[B,C,H,W]`.
/// Returns `None` when the shapes are identical.
pub(crate) fn broadcast_map(a_shape: &[usize], b_shape: &[usize]) -> Result<Option<Vec<usize>>> {
    if a_shape == b_shape {
        return Ok(None);
    }
    if b_shape.len() > a_shape.len() {
        return dim_err(format!("cannot broadcast {b_shape:?} onto {a_shape:?}"));
    }
    let lead = a_shape.len() - b_shape.len();
    let mut bstride = vec![0usize; a_shape.len()];
    let mut s = 1;
    for i in (0..b_shape.len()).rev() {
        let (bd, ad) = (b_shape[i], a_shape[lead + i]);
        if bd == ad {
            bstride[lead + i] = s;
        } else if bd != 1 {
            return dim_err(format!("cannot broadcast {b_shape:?} onto {a_shape:?}"));
        }
        s *= bd;
    }
    let n: usize = a_shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; a_shape.len()];
    let mut off = 0usize;
    for _ in 0..n {
        map.push(off);
        for ax in (0..a_shape.len()).rev() {
            idx[ax] += 1;
            off += bstride[ax];
            if idx[ax] < a_shape[ax] {
                break;
            }
            off -= bstride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Ok(Some(map))
}

impl<'t, S: Scalar> Var<'t, S> {
    fn binary(self, other: Var<'t, S>, kind: BinaryKind) -> Result<Var<'t, S>> {
        self.same_tape(&other)?;
        let a = self.value();
        let b = other.value();
        let bmap = broadcast_map(a.shape(), b.shape())?;
        let f = |x: S, y: S| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let data: Vec<S> = match &bmap {
            None => a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
            Some(m) => a.data().iter().zip(m).map(|(&x, &j)| f(x, b.data()[j])).collect(),
        };
        let out = Tensor::new(a.shape().to_vec(), data)?;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape().push(
            out,
            Op::Binary { kind, a: self.id(), b: other.id(), bmap: bmap.map(Rc::new) },
            rg,
        ))
    }

    /// Elementwise sum; `other` may broadcast onto `self` (see crate docs).
    pub fn add(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, BinaryKind::Mul)
    }

    /// `mul * x + add`.
    pub fn affine(self, mul: f64, add: f64) -> Var<'t, S> {
        let (m, c) = (S::of(mul), S::of(add));
        let out = self.value().map(|x| m * x + c);
        let rg = self.requires_grad();
        self.tape().push(out, Op::Affine { a: self.id(), mul }, rg)
    }

    pub fn scale(self, factor: f64) -> Var<'t, S> {
        self.affine(factor, 0.0)
    }

    fn unary(self, kind: UnaryKind, p0: f64, p1: f64) -> Var<'t, S> {
        let v = self.value();
        let out = match kind {
            UnaryKind::Relu => v.map(|x| if x > S::zero() { x } else { S::zero() }),
            UnaryKind::LeakyRelu => {
                let slope = S::of(p0);
                v.map(|x| if x > S::zero() { x } else { slope * x })
            }
            UnaryKind::Elu => v.map(|x| if x > S::zero() { x } else { x.exp_m1() }),
            UnaryKind::Log => v.map(|x| x.ln()),
            UnaryKind::Clamp => {
                let (lo, hi) = (S::of(p0), S::of(p1));
                v.map(|x| x.max(lo).min(hi))
            }
        };
        let rg = self.requires_grad();
        self.tape().push(out, Op::Unary { kind, a: self.id(), p0, p1 }, rg)
    }

    pub fn relu(self) -> Var<'t, S> {
        self.unary(UnaryKind::Relu, 0.0, 0.0)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t, S> {
        self.unary(UnaryKind::LeakyRelu, slope, 0.0)
    }

    /// Exponential linear unit with unit scale.
    pub fn elu(self) -> Var<'t, S> {
        self.unary(UnaryKind::Elu, 0.0, 0.0)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t, S> {
        self.unary(UnaryKind::Clamp, lo, hi)
    }

    /// Natural log; every element must be strictly positive.
    pub fn log(self) -> Result<Var<'t, S>> {
        let v = self.value();
        if let Some((i, x)) = v.data().iter().enumerate().find(|(_, x)| !(**x > S::zero())) {
            return Err(TensorError::Domain(format!("log of non-positive value {x} at element {i}")));
        }
        Ok(self.unary(UnaryKind::Log, 0.0, 0.0))
    }
}

pub(super) fn binary_backward<S: Scalar>(
    kind: BinaryKind,
    a: usize,
    b: usize,
    bmap: Option<&Vec<usize>>,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let av = val(nodes, a).data();
    let bv = val(nodes, b).data();
    let bidx = |i: usize| bmap.map_or(i, |m| m[i]);
    if let Some(ga) = acc(adj, nodes, a) {
        match kind {
            BinaryKind::Add | BinaryKind::Sub => ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y),
            BinaryKind::Mul => {
                for (i, (x, &y)) in ga.iter_mut().zip(g).enumerate() {
                    *x += y * bv[bidx(i)];
                }
            }
        }
    }
    if let Some(gb) = acc(adj, nodes, b) {
        for (i, &y) in g.iter().enumerate() {
            let j = bidx(i);
            match kind {
                BinaryKind::Add => gb[j] += y,
                BinaryKind::Sub => gb[j] -= y,
                BinaryKind::Mul => gb[j] += y * av[i],
            }
        }
    }
}

pub(super) fn affine_backward<S: Scalar>(
    a: usize,
    mul: f64,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let m = S::of(mul);
    if let Some(ga) = acc(adj, nodes, a) {
        ga.iter_mut().zip(g).for_each(|(x, &y)| *x += m * y);
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn unary_backward<S: Scalar>(
    kind: UnaryKind,
    a: usize,
    p0: f64,
    p1: f64,
    nodes: &[Node<S>],
    out: &Tensor<S>,
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let x = val(nodes, a).data();
    let y = out.data();
    let zero = S::zero();
    let Some(ga) = acc(adj, nodes, a) else { return };
    match kind {
        UnaryKind::Relu => {
            for i in 0..g.len() {
                if x[i] > zero {
                    ga[i] += g[i];
                }
            }
        }
        UnaryKind::LeakyRelu => {
            let slope = S::of(p0);
            for i in 0..g.len() {
                if x[i] > zero {
                    ga[i] += g[i];
                } else if x[i] < zero {
                    ga[i] += slope * g[i];
                }
            }
        }
        UnaryKind::Elu => {
            for i in 0..g.len() {
                let d = if x[i] > zero { S::one() } else { y[i] + S::one() };
                ga[i] += d * g[i];
            }
        }
        UnaryKind::Log => {
            for i in 0..g.len() {
                ga[i] += g[i] / x[i];
            }
        }
        UnaryKind::Clamp => {
            let (lo, hi) = (S::of(p0), S::of(p1));
            for i in 0..g.len() {
                if x[i] >= lo && x[i] <= hi {
                    ga[i] += g[i];
                }
            }
        }
    }
}
