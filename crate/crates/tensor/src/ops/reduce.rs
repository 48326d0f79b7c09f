use super::{acc, AxisSplit, Op};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::{split_axis, Tensor};

impl<'t, S: Scalar> Var<'t, S> {
    fn reduce_axis(self, axis: usize, mean: bool) -> Result<Var<'t, S>> {
        let v = self.value();
        let (outer, n, inner) = split_axis(v.shape(), axis)?;
        let mut shape = v.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let mut out = vec![S::zero(); outer * inner];
        let x = v.data();
        for o in 0..outer {
            for j in 0..n {
                let src = &x[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if mean {
            let inv = S::one() / S::of(n as f64);
            out.iter_mut().for_each(|x| *x *= inv);
        }
        let rg = self.requires_grad();
        let split = AxisSplit { outer, n, inner };
        Ok(self.tape().push(Tensor::new(shape, out)?, Op::SumAxis { a: self.id(), split, mean }, rg))
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t, S>> {
        self.reduce_axis(axis, false)
    }

    /// Arithmetic mean over one axis, removing it.
    pub fn mean_axis(self, axis: usize) -> Result<Var<'t, S>> {
        self.reduce_axis(axis, true)
    }

    pub fn sum_all(self) -> Var<'t, S> {
        let s: S = self.value().data().iter().copied().sum();
        let rg = self.requires_grad();
        self.tape().push(Tensor::scalar(s), Op::SumAll { a: self.id(), mean: false }, rg)
    }

    pub fn mean_all(self) -> Var<'t, S> {
        let v = self.value();
        let s: S = v.data().iter().copied().sum::<S>() / S::of(v.numel() as f64);
        let rg = self.requires_grad();
        self.tape().push(Tensor::scalar(s), Op::SumAll { a: self.id(), mean: true }, rg)
    }

    /// Global average pooling: mean over the two trailing (spatial) axes,
    /// `[.., H, W] -> [..]`.
    pub fn global_avg_pool(self) -> Result<Var<'t, S>> {
        let shape = self.shape();
        if shape.len() < 3 {
            return dim_err(format!("global_avg_pool needs [.., C, H, W], got {shape:?}"));
        }
        let r = shape.len();
        let mut flat = shape[..r - 2].to_vec();
        flat.push(shape[r - 2] * shape[r - 1]);
        self.reshape(flat)?.mean_axis(r - 2)
    }

    /// Sliding mean along `axis`: `out[i] = mean(x[i .. i + window])`.
    pub fn window_mean(self, axis: usize, window: usize) -> Result<Var<'t, S>> {
        let v = self.value();
        let (outer, n, inner) = split_axis(v.shape(), axis)?;
        if window == 0 || window > n {
            return dim_err(format!("window {window} over extent {n}"));
        }
        let m = n - window + 1;
        let x = v.data();
        let inv = S::one() / S::of(window as f64);
        let mut out = vec![S::zero(); outer * m * inner];
        for o in 0..outer {
            for i in 0..m {
                let dst = &mut out[(o * m + i) * inner..(o * m + i + 1) * inner];
                for j in i..i + window {
                    let src = &x[(o * n + j) * inner..(o * n + j + 1) * inner];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                dst.iter_mut().for_each(|d| *d *= inv);
            }
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = m;
        let rg = self.requires_grad();
        let split = AxisSplit { outer, n, inner };
        Ok(self.tape().push(Tensor::new(shape, out)?, Op::WindowMean { a: self.id(), split, window }, rg))
    }
}

pub(super) fn sum_axis_backward<S: Scalar>(
    a: usize,
    split: AxisSplit,
    mean: bool,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    let AxisSplit { outer, n, inner } = split;
    let scale = if mean { S::one() / S::of(n as f64) } else { S::one() };
    for o in 0..outer {
        let src = &g[o * inner..(o + 1) * inner];
        for j in 0..n {
            let dst = &mut ga[(o * n + j) * inner..(o * n + j + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

pub(super) fn sum_all_backward<S: Scalar>(
    a: usize,
    mean: bool,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    let scale = if mean { S::one() / S::of(ga.len() as f64) } else { S::one() };
    let d = g[0] * scale;
    ga.iter_mut().for_each(|x| *x += d);
}

pub(super) fn window_mean_backward<S: Scalar>(
    a: usize,
    split: AxisSplit,
    window: usize,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    let AxisSplit { outer, n, inner } = split;
    let m = n - window + 1;
    let inv = S::one() / S::of(window as f64);
    for o in 0..outer {
        for i in 0..m {
            let src = &g[(o * m + i) * inner..(o * m + i + 1) * inner];
            for j in i..i + window {
                let dst = &mut ga[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += inv * s;
                }
            }
        }
    }
}
