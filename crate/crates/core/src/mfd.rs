//! Multi-scale facial dynamics: inter-frame differences at every backbone
//! scale, resized to the top grid, averaged over the window, weighted per
//! cell by a softmax across scales and added to the static top feature.

use mdhr_tensor::{Scalar, TensorError, Var};
use rand::Rng;

use crate::config::{RunConfig, TOP_SIZE};
use crate::error::{CoreError, Result};
use crate::params::{kaiming_uniform, Bound, ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct Mfd {
    k: usize,
    channels: Vec<usize>,
    strides: Vec<usize>,
    c: usize,
    resize: Vec<ParamId>,
    /// `(weight [1, L*c, 1, 1], bias [1])` per scale.
    logits: Vec<(ParamId, ParamId)>,
}

/// Output for `n` frames.
pub struct MfdOutput<'t, S: Scalar> {
    /// Fused feature `G`, `[n, c, 7, 7]`.
    pub g: Var<'t, S>,
    /// Scale weights `[n, L, 7, 7]`.
    pub weights: Var<'t, S>,
}

impl Mfd {
    /// The resize convolutions carry no bias so that zero differences stay
    /// exactly zero.
    pub fn new<S: Scalar>(cfg: &RunConfig, store: &mut ParamStore<S>, rng: &mut impl Rng) -> Self {
        let channels = cfg.backbone.stage_channels.clone();
        let strides = cfg.resize_strides();
        let c = cfg.backbone.top_channels();
        let l = channels.len();
        let resize = channels
            .iter()
            .zip(&strides)
            .enumerate()
            .map(|(i, (&cl, &s))| {
                let w = kaiming_uniform(&[c, cl, s, s], cl * s * s, rng);
                store.add(format!("mfd.resize{i}.weight"), w, true)
            })
            .collect();
        let logits = (0..l)
            .map(|i| {
                let w = kaiming_uniform(&[1, l * c, 1, 1], l * c, rng);
                (
                    store.add(format!("mfd.scale_logit{i}.weight"), w, true),
                    store.add(format!("mfd.scale_logit{i}.bias"), mdhr_tensor::Tensor::zeros([1]), false),
                )
            })
            .collect();
        Mfd { k: cfg.mfd.k, channels, strides, c, resize, logits }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn scales(&self) -> usize {
        self.channels.len()
    }

    /// Eq. 2 resize of one scale: `[n, C_l, S_l, S_l] -> [n, c, 7, 7]`.
    pub fn resize<'t, S: Scalar>(&self, p: &Bound<'t, S>, l: usize, d: Var<'t, S>) -> Result<Var<'t, S>> {
        let s = self.strides[l];
        let shape = d.shape();
        if shape.len() != 4 || shape[2] != s * TOP_SIZE || shape[3] != s * TOP_SIZE {
            return Err(CoreError::Config(format!(
                "scale {l} map {shape:?} cannot be resized onto {TOP_SIZE}x{TOP_SIZE} with stride {s}"
            )));
        }
        Ok(d.conv2d(p.var(self.resize[l]), None, s, 0)?)
    }

    /// Scale weights from the averaged maps `dbar[l]: [n, c, 7, 7]`, as `[n, L, 7, 7]`.
    pub fn adaptive_weights<'t, S: Scalar>(&self, p: &Bound<'t, S>, dbar: &[Var<'t, S>]) -> Result<Var<'t, S>> {
        let cat = Var::concat(dbar, 1)?;
        let w: Vec<_> = self.logits.iter().map(|&(w, _)| p.var(w)).collect();
        let b: Vec<_> = self.logits.iter().map(|&(_, b)| p.var(b)).collect();
        let logits = cat.conv2d(Var::concat(&w, 0)?, Some(Var::concat(&b, 0)?), 1, 0)?;
        Ok(logits.softmax(1)?)
    }

    /// `G = sum_l w_l * dbar_l + x_top`, with each `w_l` broadcast over channels.
    pub fn fuse<'t, S: Scalar>(dbar: &[Var<'t, S>], weights: Var<'t, S>, x_top: Var<'t, S>) -> Result<Var<'t, S>> {
        let mut g = x_top;
        for (l, d) in dbar.iter().enumerate() {
            let w = weights.slice_axis(1, l, l + 1)?;
            g = g.add(d.mul(w)?)?;
        }
        Ok(g)
    }

    /// Batched forward over padded clips. `pyramid[l]` holds `[b * f, C_l, S_l, S_l]`
    /// feature maps for `b` clips of `f = t + 2k` frames; returns outputs for
    /// the `b * t` centre frames.
    pub fn forward<'t, S: Scalar>(
        &self,
        p: &Bound<'t, S>,
        pyramid: &[Var<'t, S>],
        b: usize,
        t: usize,
    ) -> Result<MfdOutput<'t, S>> {
        let k = self.k;
        let f = t + 2 * k;
        if pyramid.len() != self.scales() {
            return Err(TensorError::Dimension(format!("{} scales, expected {}", pyramid.len(), self.scales())).into());
        }
        let mut dbar = Vec::with_capacity(pyramid.len());
        for (l, &x) in pyramid.iter().enumerate() {
            let s = x.shape();
            let per = s[1..].to_vec();
            let seq = x.reshape([vec![b, f], per.clone()].concat())?;
            let diff = seq.slice_axis(1, 1, f)?.sub(seq.slice_axis(1, 0, f - 1)?)?;
            let flat = diff.reshape([vec![b * (f - 1)], per].concat())?;
            let r = self.resize(p, l, flat)?;
            let r = r.reshape([b, f - 1, self.c * TOP_SIZE * TOP_SIZE])?;
            let m = r.window_mean(1, 2 * k)?;
            dbar.push(m.reshape([b * t, self.c, TOP_SIZE, TOP_SIZE])?);
        }
        let top = pyramid[pyramid.len() - 1];
        let top = top
            .reshape([b, f, self.c * TOP_SIZE * TOP_SIZE])?
            .slice_axis(1, k, k + t)?
            .reshape([b * t, self.c, TOP_SIZE, TOP_SIZE])?;
        let weights = self.adaptive_weights(p, &dbar)?;
        let g = Self::fuse(&dbar, weights, top)?;
        Ok(MfdOutput { g, weights })
    }

    /// Literal single-frame path over a window of `2k + 1` pyramids
    /// (`window[j][l]: [1, C_l, S_l, S_l]`), centred on frame `k`.
    pub fn forward_window<'t, S: Scalar>(
        &self,
        p: &Bound<'t, S>,
        window: &[Vec<Var<'t, S>>],
    ) -> Result<MfdOutput<'t, S>> {
        let diffs = temporal_difference(window, self.k)?;
        let mut dbar = Vec::with_capacity(self.scales());
        for (l, d) in diffs.iter().enumerate() {
            let resized = d.iter().map(|&x| self.resize(p, l, x)).collect::<Result<Vec<_>>>()?;
            dbar.push(temporal_average(&resized)?);
        }
        let top = *window[self.k].last().ok_or_else(|| TensorError::Usage("empty pyramid".into()))?;
        let weights = self.adaptive_weights(p, &dbar)?;
        let g = Self::fuse(&dbar, weights, top)?;
        Ok(MfdOutput { g, weights })
    }
}

/// Per scale, the `2k` differences `x^{j+1} - x^j` over a window of
/// `2k + 1` pyramids.
pub fn temporal_difference<'t, S: Scalar>(window: &[Vec<Var<'t, S>>], k: usize) -> Result<Vec<Vec<Var<'t, S>>>> {
    if window.len() != 2 * k + 1 {
        return Err(TensorError::Usage(format!("window of {} frames, expected {}", window.len(), 2 * k + 1)).into());
    }
    let scales = window[0].len();
    (0..scales)
        .map(|l| (0..2 * k).map(|j| Ok(window[j + 1][l].sub(window[j][l])?)).collect())
        .collect()
}

/// Mean of equally shaped maps.
pub fn temporal_average<'t, S: Scalar>(maps: &[Var<'t, S>]) -> Result<Var<'t, S>> {
    let (&first, rest) = maps.split_first().ok_or_else(|| TensorError::Usage("no maps to average".into()))?;
    let mut acc = first;
    for &m in rest {
        acc = acc.add(m)?;
    }
    Ok(acc.scale(1.0 / maps.len() as f64))
}
