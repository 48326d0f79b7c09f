//! Per-AU temporal convolution and similarity-to-anchor prediction.

use mdhr_tensor::{Scalar, Tensor, Var};
use rand::Rng;

use crate::config::RunConfig;
use crate::error::{CoreError, Result};
use crate::params::{kaiming_uniform, uniform, Bound, ParamId, ParamStore};

pub const TCN_KERNEL: usize = 5;
pub const TCN_PAD: usize = 2;

#[derive(Clone, Debug)]
pub struct Head {
    au_dim: usize,
    tcn: Vec<(ParamId, ParamId)>,
    anchors: Vec<ParamId>,
}

impl Head {
    pub fn new<S: Scalar>(cfg: &RunConfig, store: &mut ParamStore<S>, rng: &mut impl Rng) -> Self {
        let b = cfg.hsr.au_dim;
        let tcn = cfg
            .au_ids
            .iter()
            .map(|id| {
                let w = kaiming_uniform(&[b, b, TCN_KERNEL], b * TCN_KERNEL, rng);
                (
                    store.add(format!("head.tcn.au{id}.weight"), w, true),
                    store.add(format!("head.tcn.au{id}.bias"), Tensor::zeros([b]), false),
                )
            })
            .collect();
        let anchors =
            cfg.au_ids.iter().map(|id| store.add(format!("head.anchor.au{id}"), uniform(&[b], 0.0, 0.1, rng), false)).collect();
        Head { au_dim: b, tcn, anchors }
    }

    /// Length-preserving conv over `[batch, b, T]` for AU `n`.
    pub fn tcn_forward<'t, S: Scalar>(&self, p: &Bound<'t, S>, n: usize, seq: Var<'t, S>) -> Result<Var<'t, S>> {
        let shape = seq.shape();
        if shape.len() != 3 || shape[2] == 0 {
            return Err(CoreError::Tensor(mdhr_tensor::TensorError::Usage(format!("tcn needs [batch, b, T>=1], got {shape:?}"))));
        }
        let (w, b) = self.tcn[n];
        Ok(seq.conv1d(p.var(w), Some(p.var(b)), TCN_PAD)?)
    }

    /// `nodes [batch * T, N, b]` to probabilities `[batch, T, N]`.
    pub fn forward<'t, S: Scalar>(&self, p: &Bound<'t, S>, nodes: Var<'t, S>, batch: usize, t: usize) -> Result<Var<'t, S>> {
        let n_aus = self.tcn.len();
        let seq = nodes.reshape([batch, t, n_aus, self.au_dim])?.permute(&[0, 2, 3, 1])?;
        let mut cols = Vec::with_capacity(n_aus);
        for n in 0..n_aus {
            let v = seq.slice_axis(1, n, n + 1)?.reshape([batch, self.au_dim, t])?;
            let vbar = self.tcn_forward(p, n, v)?.permute(&[0, 2, 1])?;
            cols.push(sc_predict(vbar, p.var(self.anchors[n]))?.reshape([batch, t, 1])?);
        }
        Ok(Var::concat(&cols, 2)?)
    }
}

/// Cosine similarity of `relu(v)` (last axis `b`) and `relu(anchor)`.
/// Zero after rectification gives 0.
pub fn sc_predict<'t, S: Scalar>(v: Var<'t, S>, anchor: Var<'t, S>) -> Result<Var<'t, S>> {
    let axis = v.shape().len() - 1;
    let u = v.relu().l2_normalize(axis)?;
    let s = anchor.relu().l2_normalize(0)?;
    Ok(u.mul(s)?.sum_axis(axis)?)
}
