//! Losses and frame-based F1.

use mdhr_tensor::{Scalar, Tensor, TensorError, Var};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const PROB_EPS: f64 = 1e-7;
pub const DEFAULT_LAMBDA: f64 = 0.01;

/// `w_n = N (1 / r_n) / sum_i (1 / r_i)` with `r_n = active_n / total`.
pub fn class_weights(active_counts: &[u64], total_frames: u64) -> Result<Vec<f64>> {
    if let Some(i) = active_counts.iter().position(|&a| a == 0 || a >= total_frames) {
        return Err(TensorError::Domain(format!(
            "AU column {i} occurs in {} of {total_frames} frames; weights need 0 < count < total",
            active_counts[i]
        ))
        .into());
    }
    let inv: Vec<f64> = active_counts.iter().map(|&a| total_frames as f64 / a as f64).collect();
    let z: f64 = inv.iter().sum();
    let n = inv.len() as f64;
    Ok(inv.iter().map(|v| n * v / z).collect())
}

/// Asymmetric multi-label loss over `probs [B, T, N]` and binary `labels`
/// of the same shape, averaged over counted frames. `mask [B, T]` drops
/// padded frames; without it every frame counts.
pub fn au_loss<'t, S: Scalar>(
    probs: Var<'t, S>,
    labels: &Tensor<S>,
    weights: &[f64],
    mask: Option<&Tensor<S>>,
) -> Result<Var<'t, S>> {
    let shape = probs.shape();
    if shape.len() != 3 || labels.shape() != shape.as_slice() || weights.len() != shape[2] {
        return Err(TensorError::Dimension(format!(
            "au_loss: probs {shape:?}, labels {:?}, {} weights",
            labels.shape(),
            weights.len()
        ))
        .into());
    }
    let tape = probs.tape();
    let (b, t, n) = (shape[0], shape[1], shape[2]);
    let frame_w: Vec<f64> = match mask {
        Some(m) => {
            if m.shape() != [b, t] {
                return Err(TensorError::Dimension(format!("mask {:?} for [{b}, {t}]", m.shape())).into());
            }
            m.to_f64_vec()
        }
        None => vec![1.0; b * t],
    };
    let frames: f64 = frame_w.iter().sum();
    let y = labels.data();
    // Per element: y * w * log p  and  (1 - y) * w * p * log(1 - p),
    // folded into constant coefficient tensors.
    let pos = Tensor::from_fn(shape.clone(), |i| S::of(y[i].as_f64() * weights[i % n] * frame_w[i / n]));
    let neg = Tensor::from_fn(shape.clone(), |i| S::of((1.0 - y[i].as_f64()) * weights[i % n] * frame_w[i / n]));
    let p = probs.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let log_p = p.log()?;
    let log_q = p.affine(-1.0, 1.0).log()?;
    let a = log_p.mul(tape.constant(pos))?;
    let c = p.mul(log_q)?.mul(tape.constant(neg))?;
    let total = a.add(c)?.sum_all();
    Ok(total.scale(-1.0 / frames.max(1.0)))
}

/// Cross-entropy of each region's combination distribution `[F, 2^{N_r}]`
/// against frame targets, summed over regions and averaged over frames.
pub fn sub_loss<'t, S: Scalar>(dists: &[Var<'t, S>], targets: &[Vec<usize>], mask: Option<&[f64]>) -> Result<Var<'t, S>> {
    if dists.len() != targets.len() || dists.is_empty() {
        return Err(TensorError::Dimension(format!("{} distributions for {} target sets", dists.len(), targets.len())).into());
    }
    let frames = dists[0].shape()[0];
    let fw: Vec<f64> = mask.map(|m| m.to_vec()).unwrap_or_else(|| vec![1.0; frames]);
    let count: f64 = fw.iter().sum();
    let tape = dists[0].tape();
    let mut total: Option<Var<'t, S>> = None;
    for (d, tg) in dists.iter().zip(targets) {
        let classes = d.shape()[1];
        if tg.len() != frames {
            return Err(TensorError::Dimension(format!("{} targets for {frames} frames", tg.len())).into());
        }
        if let Some(&bad) = tg.iter().find(|&&i| i >= classes) {
            return Err(TensorError::Domain(format!("combination target {bad} out of range for {classes} classes")).into());
        }
        let picked = d.pick(tg)?;
        let nll = picked.clamp(PROB_EPS, f64::INFINITY).log()?.mul(tape.constant(Tensor::from_fn([frames], |i| S::of(fw[i]))))?;
        let s = nll.sum_all();
        total = Some(match total {
            Some(acc) => acc.add(s)?,
            None => s,
        });
    }
    Ok(total.expect("non-empty").scale(-1.0 / count.max(1.0)))
}

pub fn total_loss<'t, S: Scalar>(l_au: Var<'t, S>, l_sub: Var<'t, S>, lambda: f64) -> Result<Var<'t, S>> {
    Ok(l_au.add(l_sub.scale(lambda))?)
}

/// Additive per-AU confusion counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct F1Report {
    pub per_au: Vec<AuScore>,
    pub macro_f1: f64,
}

impl Confusion {
    pub fn new(n: usize) -> Self {
        Confusion { tp: vec![0; n], fp: vec![0; n], fn_: vec![0; n], tn: vec![0; n] }
    }

    /// Counts rows of `n` predictions against labels; rows with a zero
    /// `mask` entry are skipped.
    pub fn add(&mut self, probs: &[f64], labels: &[u8], mask: Option<&[bool]>, threshold: f64) {
        let n = self.tp.len();
        for (row, (p, y)) in probs.chunks(n).zip(labels.chunks(n)).enumerate() {
            if mask.is_some_and(|m| !m[row]) {
                continue;
            }
            for j in 0..n {
                match (p[j] >= threshold, y[j] != 0) {
                    (true, true) => self.tp[j] += 1,
                    (true, false) => self.fp[j] += 1,
                    (false, true) => self.fn_[j] += 1,
                    (false, false) => self.tn[j] += 1,
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in [(&mut self.tp, &other.tp), (&mut self.fp, &other.fp), (&mut self.fn_, &other.fn_), (&mut self.tn, &other.tn)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn report(&self) -> F1Report {
        let per_au: Vec<AuScore> = (0..self.tp.len())
            .map(|j| {
                let (tp, fp, fn_) = (self.tp[j] as f64, self.fp[j] as f64, self.fn_[j] as f64);
                let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
                let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
                AuScore { precision, recall, f1 }
            })
            .collect();
        let macro_f1 = per_au.iter().map(|s| s.f1).sum::<f64>() / per_au.len().max(1) as f64;
        F1Report { per_au, macro_f1 }
    }
}

/// Per-AU F1 of `probs` (rows of `n`) binarized at `threshold`.
pub fn f1_scores(probs: &[f64], labels: &[u8], n: usize, threshold: f64) -> F1Report {
    let mut c = Confusion::new(n);
    c.add(probs, labels, None, threshold);
    c.report()
}
