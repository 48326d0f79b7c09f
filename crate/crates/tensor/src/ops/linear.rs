use super::{acc, val, Op};
use crate::error::{dim_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::Tensor;

impl<'t, S: Scalar> Var<'t, S> {
    /// `x @ w^T + b` over the last axis: `x [.., din]`, `w [dout, din]`,
    /// `b [dout]`.
    pub fn linear(self, w: Var<'t, S>, b: Option<Var<'t, S>>) -> Result<Var<'t, S>> {
        self.same_tape(&w)?;
        let xv = self.value();
        let wv = w.value();
        let xs = xv.shape();
        let din = *xs.last().expect("rank >= 1");
        if wv.rank() != 2 || wv.shape()[1] != din {
            return dim_err(format!("linear weight {:?} does not match input {xs:?}", wv.shape()));
        }
        let dout = wv.shape()[0];
        let rows = xv.numel() / din;
        let mut out = vec![S::zero(); rows * dout];
        if let Some(b) = &b {
            self.same_tape(b)?;
            let bv = b.value();
            if bv.shape() != [dout] {
                return dim_err(format!("linear bias {:?}, expected [{dout}]", bv.shape()));
            }
            for r in 0..rows {
                out[r * dout..(r + 1) * dout].copy_from_slice(bv.data());
            }
        }
        let (di, dou) = (din as isize, dout as isize);
        S::gemm(rows, din, dout, xv.data(), di, 1, wv.data(), 1, di, S::one(), &mut out, dou, 1);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = dout;
        let rg = self.requires_grad() || w.requires_grad() || b.is_some_and(|b| b.requires_grad());
        Ok(self.tape().push(
            Tensor::new(shape, out)?,
            Op::Linear { x: self.id(), w: w.id(), b: b.map(|b| b.id()), rows, din, dout },
            rg,
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn linear_backward<S: Scalar>(
    x: usize,
    w: usize,
    b: Option<usize>,
    rows: usize,
    din: usize,
    dout: usize,
    nodes: &[Node<S>],
    g: &[S],
    adj: &mut [Option<Vec<S>>],
) {
    let (di, dou) = (din as isize, dout as isize);
    if let Some(gx) = acc(adj, nodes, x) {
        let wv = val(nodes, w).data();
        S::gemm(rows, dout, din, g, dou, 1, wv, di, 1, S::one(), gx, di, 1);
    }
    if let Some(gw) = acc(adj, nodes, w) {
        let xv = val(nodes, x).data();
        S::gemm(dout, rows, din, g, 1, dou, xv, di, 1, S::one(), gw, di, 1);
    }
    if let Some(b) = b {
        if let Some(gb) = acc(adj, nodes, b) {
            for r in 0..rows {
                for (d, &s) in gb.iter_mut().zip(&g[r * dout..(r + 1) * dout]) {
                    *d += s;
                }
            }
        }
    }
}
