use super::{acc, AxisSplit, Op};
use crate::error::{dim_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::{numel_of, split_axis, strides_of, Tensor};

impl<'t, S: Scalar> Var<'t, S> {
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, S>> {
        let out = self.value().reshape(shape)?;
        let rg = self.requires_grad();
        Ok(self.tape().push(out, Op::Reshape { a: self.id() }, rg))
    }

    /// Reorders axes; output axis `i` is input axis `perm[i]`.
    pub fn permute(self, perm: &[usize]) -> Result<Var<'t, S>> {
        let v = self.value();
        let r = v.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return dim_err(format!("invalid permutation {perm:?} for rank {r}"));
        }
        let in_strides = strides_of(v.shape());
        let out_shape: Vec<usize> = perm.iter().map(|&p| v.shape()[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let data = gather_strided(v.data(), &out_shape, &src_strides);
        let rg = self.requires_grad();
        Ok(self.tape().push(Tensor::new(out_shape, data)?, Op::Permute { a: self.id(), perm: perm.to_vec() }, rg))
    }

    /// Copy of `[start, end)` along `axis`.
    pub fn slice_axis(self, axis: usize, start: usize, end: usize) -> Result<Var<'t, S>> {
        let v = self.value();
        let (outer, n, inner) = split_axis(v.shape(), axis)?;
        let out = v.slice_axis(axis, start, end)?;
        let rg = self.requires_grad();
        let split = AxisSplit { outer, n, inner };
        Ok(self.tape().push(out, Op::Slice { a: self.id(), split, start, len: end - start }, rg))
    }

    /// Joins vars along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t, S>], axis: usize) -> Result<Var<'t, S>> {
        let first = parts.first().ok_or_else(|| TensorError::Usage("concat of zero tensors".into()))?;
        let base = first.shape();
        if axis >= base.len() {
            return dim_err(format!("concat axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        let mut inputs = Vec::with_capacity(parts.len());
        let mut values = Vec::with_capacity(parts.len());
        for p in parts {
            first.same_tape(p)?;
            let v = p.value();
            let s = v.shape();
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return dim_err(format!("concat shape {s:?} incompatible with {base:?} on axis {axis}"));
            }
            inputs.push((p.id(), s[axis]));
            total += s[axis];
            values.push(v);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let len = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let rg = parts.iter().any(|p| p.requires_grad());
        Ok(first.tape().push(Tensor::new(shape, data)?, Op::Concat { inputs, outer, inner, total }, rg))
    }

    /// Selects one class per row of a `[.., C]` tensor, giving `[..]`.
    pub fn pick(self, indices: &[usize]) -> Result<Var<'t, S>> {
        let v = self.value();
        let shape = v.shape();
        let classes = *shape.last().expect("rank >= 1");
        let rows = v.numel() / classes;
        if indices.len() != rows {
            return dim_err(format!("pick needs {rows} indices, got {}", indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= classes) {
            return Err(TensorError::Domain(format!("class index {bad} out of range 0..{classes}")));
        }
        let data: Vec<S> = indices.iter().enumerate().map(|(r, &c)| v.data()[r * classes + c]).collect();
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.requires_grad();
        Ok(self.tape().push(
            Tensor::new(out_shape, data)?,
            Op::Pick { a: self.id(), classes, indices: indices.to_vec() },
            rg,
        ))
    }
}

/// Reads `src` through `strides` in row-major order of `shape`.
fn gather_strided<S: Copy>(src: &[S], shape: &[usize], strides: &[usize]) -> Vec<S> {
    let n = numel_of(shape);
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(src[off]);
        for ax in (0..shape.len()).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            off -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    out
}

pub(super) fn reshape_backward<S: Scalar>(a: usize, nodes: &[Node<S>], g: &[S], adj: &mut [Option<Vec<S>>]) {
    if let Some(ga) = acc(adj, nodes, a) {
        ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
    }
}

pub(super) fn permute_backward<S: Scalar>(
    a: usize,
    perm: &[usize],
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let in_shape = nodes[a].value.shape().to_vec();
    let Some(ga) = acc(adj, nodes, a) else { return };
    let in_strides = strides_of(&in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let dst_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut idx = vec![0usize; out_shape.len()];
    let mut off = 0usize;
    for &y in g {
        ga[off] += y;
        for ax in (0..out_shape.len()).rev() {
            idx[ax] += 1;
            off += dst_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= dst_strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

pub(super) fn slice_backward<S: Scalar>(
    a: usize,
    split: AxisSplit,
    start: usize,
    len: usize,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    let AxisSplit { outer, n, inner } = split;
    for o in 0..outer {
        let src = &g[o * len * inner..(o + 1) * len * inner];
        let dst = &mut ga[(o * n + start) * inner..(o * n + start + len) * inner];
        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
    }
}

pub(super) fn concat_backward<S: Scalar>(
    inputs: &[(usize, usize)],
    outer: usize,
    inner: usize,
    total: usize,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let mut offset = 0;
    for &(id, extent) in inputs {
        if let Some(ga) = acc(adj, nodes, id) {
            let len = extent * inner;
            for o in 0..outer {
                let src = &g[o * total * inner + offset * inner..][..len];
                ga[o * len..(o + 1) * len].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        }
        offset += extent;
    }
}

pub(super) fn pick_backward<S: Scalar>(
    a: usize,
    classes: usize,
    indices: &[usize],
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    for (r, &c) in indices.iter().enumerate() {
        ga[r * classes + c] += g[r];
    }
}
