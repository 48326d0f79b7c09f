use std::rc::Rc;

use super::{acc, val, Op};
use crate::error::{dim_err, Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Node, Var};
use crate::tensor::Tensor;

pub(crate) struct AttentionSaved<S> {
    wv: usize,
    r: usize,
    adj: Rc<Vec<bool>>,
    groups: usize,
    nodes: usize,
    width: usize,
    slope: S,
    /// Attention logits before LeakyReLU, `[G, N, N]`.
    pre: Vec<S>,
    /// Normalized coefficients, zero off the neighborhood.
    alpha: Vec<S>,
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Masked attention aggregation over `G` independent graphs.
    ///
    /// `self` holds transformed node features `Wv` as `[G, N, b]`, `r` is
    /// `[2b]` and `adj[(g * N + n) * N + m]` marks `m` as a neighbour of `n`.
    /// Returns `z_n = sum_m alpha_nm Wv_m` with
    /// `alpha_n = softmax_m(LeakyReLU(r[..b] . Wv_n + r[b..] . Wv_m))`.
    pub fn graph_attention(self, r: Var<'t, S>, adj: Rc<Vec<bool>>, slope: f64) -> Result<Var<'t, S>> {
        self.same_tape(&r)?;
        let wv = self.value();
        let rv = r.value();
        let s = wv.shape();
        if s.len() != 3 {
            return dim_err(format!("graph_attention needs [G, N, b], got {s:?}"));
        }
        let (groups, nodes, width) = (s[0], s[1], s[2]);
        if rv.shape() != [2 * width] {
            return dim_err(format!("attention vector {:?}, expected [{}]", rv.shape(), 2 * width));
        }
        if adj.len() != groups * nodes * nodes {
            return dim_err(format!("adjacency has {} entries, expected {}", adj.len(), groups * nodes * nodes));
        }
        let (x, rd) = (wv.data(), rv.data());
        let slope_s = S::of(slope);
        let dot = |row: &[S], coef: &[S]| row.iter().zip(coef).map(|(&a, &b)| a * b).sum::<S>();
        let mut pre = vec![S::zero(); groups * nodes * nodes];
        let mut alpha = vec![S::zero(); groups * nodes * nodes];
        let mut out = vec![S::zero(); groups * nodes * width];
        for g in 0..groups {
            let feat = |n: usize| &x[(g * nodes + n) * width..(g * nodes + n + 1) * width];
            let src: Vec<S> = (0..nodes).map(|m| dot(feat(m), &rd[width..])).collect();
            for n in 0..nodes {
                let row = (g * nodes + n) * nodes;
                let mask = &adj[row..row + nodes];
                if !mask.iter().any(|&b| b) {
                    return Err(TensorError::Usage(format!("node {n} of graph {g} has no neighbours")));
                }
                let dst = dot(feat(n), &rd[..width]);
                let mut mx = S::neg_infinity();
                for m in (0..nodes).filter(|&m| mask[m]) {
                    let p = dst + src[m];
                    pre[row + m] = p;
                    let e = if p > S::zero() { p } else { slope_s * p };
                    alpha[row + m] = e;
                    mx = mx.max(e);
                }
                let mut z = S::zero();
                for m in (0..nodes).filter(|&m| mask[m]) {
                    let e = (alpha[row + m] - mx).exp();
                    alpha[row + m] = e;
                    z += e;
                }
                let o = &mut out[(g * nodes + n) * width..(g * nodes + n + 1) * width];
                for m in (0..nodes).filter(|&m| mask[m]) {
                    alpha[row + m] /= z;
                    let a = alpha[row + m];
                    for (d, &v) in o.iter_mut().zip(feat(m)) {
                        *d += a * v;
                    }
                }
            }
        }
        let saved = AttentionSaved { wv: self.id(), r: r.id(), adj, groups, nodes, width, slope: slope_s, pre, alpha };
        let rg = self.requires_grad() || r.requires_grad();
        Ok(self.tape().push(Tensor::new(s.to_vec(), out)?, Op::GraphAttention(Box::new(saved)), rg))
    }
}

pub(super) fn attention_backward<S: Scalar>(
    saved: &AttentionSaved<S>,
    nodes_: &[Node<S>],
    g: &[S],
    adj_: &mut [Option<Vec<S>>],
) {
    let AttentionSaved { wv, r, ref adj, groups, nodes, width, slope, ref pre, ref alpha } = *saved;
    let x = val(nodes_, wv).data();
    let rd = val(nodes_, r).data();
    let mut gx = vec![S::zero(); x.len()];
    let mut gr = vec![S::zero(); 2 * width];
    let dot = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&p, &q)| p * q).sum::<S>();
    for gi in 0..groups {
        let base = gi * nodes * width;
        for n in 0..nodes {
            let row = (gi * nodes + n) * nodes;
            let gz = &g[base + n * width..base + (n + 1) * width];
            let nbrs: Vec<usize> = (0..nodes).filter(|&m| adj[row + m]).collect();
            let galpha: Vec<S> = nbrs.iter().map(|&m| dot(gz, &x[base + m * width..base + (m + 1) * width])).collect();
            let mean: S = nbrs.iter().zip(&galpha).map(|(&m, &ga)| alpha[row + m] * ga).sum();
            for (&m, &ga) in nbrs.iter().zip(&galpha) {
                let a = alpha[row + m];
                for j in 0..width {
                    gx[base + m * width + j] += a * gz[j];
                }
                let p = pre[row + m];
                let slope_here = if p > S::zero() {
                    S::one()
                } else if p < S::zero() {
                    slope
                } else {
                    S::zero()
                };
                let gs = a * (ga - mean) * slope_here;
                if gs == S::zero() {
                    continue;
                }
                for j in 0..width {
                    gx[base + n * width + j] += gs * rd[j];
                    gx[base + m * width + j] += gs * rd[width + j];
                    gr[j] += gs * x[base + n * width + j];
                    gr[width + j] += gs * x[base + m * width + j];
                }
            }
        }
    }
    if let Some(dst) = acc(adj_, nodes_, wv) {
        dst.iter_mut().zip(&gx).for_each(|(d, &s)| *d += s);
    }
    if let Some(dst) = acc(adj_, nodes_, r) {
        dst.iter_mut().zip(&gr).for_each(|(d, &s)| *d += s);
    }
}
