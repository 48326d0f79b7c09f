use super::{acc, AxisSplit, Op};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::{split_axis, Tensor};

/// Norms below this are treated as zero by [`Var::l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

impl<'t, S: Scalar> Var<'t, S> {
    /// Numerically stable softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t, S>> {
        let v = self.value();
        let (outer, n, inner) = split_axis(v.shape(), axis)?;
        let x = v.data();
        debug_assert!(x.iter().all(|v| !v.is_nan()), "softmax input contains NaN");
        let mut out = vec![S::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let mut m = S::neg_infinity();
                for j in 0..n {
                    m = m.max(x[at(j)]);
                }
                let mut z = S::zero();
                for j in 0..n {
                    let e = (x[at(j)] - m).exp();
                    out[at(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    out[at(j)] /= z;
                }
            }
        }
        let rg = self.requires_grad();
        let split = AxisSplit { outer, n, inner };
        Ok(self.tape().push(Tensor::new(v.shape().to_vec(), out)?, Op::Softmax { a: self.id(), split }, rg))
    }

    /// Unit L2 norm along `axis`. Zero vectors map to zero with zero gradient.
    pub fn l2_normalize(self, axis: usize) -> Result<Var<'t, S>> {
        let v = self.value();
        let (outer, n, inner) = split_axis(v.shape(), axis)?;
        let x = v.data();
        let eps = S::of(NORM_EPS);
        let mut out = vec![S::zero(); x.len()];
        let mut norms = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let mut ss = S::zero();
                for j in 0..n {
                    ss += x[at(j)] * x[at(j)];
                }
                let r = ss.sqrt();
                norms[o * inner + i] = r;
                if r > eps {
                    for j in 0..n {
                        out[at(j)] = x[at(j)] / r;
                    }
                }
            }
        }
        let rg = self.requires_grad();
        let split = AxisSplit { outer, n, inner };
        Ok(self.tape().push(
            Tensor::new(v.shape().to_vec(), out)?,
            Op::L2Normalize { a: self.id(), split, norms },
            rg,
        ))
    }
}

pub(super) fn softmax_backward<S: Scalar>(
    a: usize,
    split: AxisSplit,
    nodes: &[Node<S>],
    out: &Tensor<S>,
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    let AxisSplit { outer, n, inner } = split;
    let y = out.data();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * n + j) * inner + i;
            let mut dot = S::zero();
            for j in 0..n {
                dot += g[at(j)] * y[at(j)];
            }
            for j in 0..n {
                ga[at(j)] += y[at(j)] * (g[at(j)] - dot);
            }
        }
    }
}

pub(super) fn l2_normalize_backward<S: Scalar>(
    a: usize,
    split: AxisSplit,
    norms: &[S],
    nodes: &[Node<S>],
    out: &Tensor<S>,
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let Some(ga) = acc(adj, nodes, a) else { return };
    let AxisSplit { outer, n, inner } = split;
    let y = out.data();
    let eps = S::of(NORM_EPS);
    for o in 0..outer {
        for i in 0..inner {
            let r = norms[o * inner + i];
            if r <= eps {
                continue;
            }
            let at = |j: usize| (o * n + j) * inner + i;
            let mut dot = S::zero();
            for j in 0..n {
                dot += g[at(j)] * y[at(j)];
            }
            for j in 0..n {
                ga[at(j)] += (g[at(j)] - y[at(j)] * dot) / r;
            }
        }
    }
}
