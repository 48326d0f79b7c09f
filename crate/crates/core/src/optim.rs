//! AdamW with decoupled weight decay and the cosine learning-rate schedule.

use mdhr_tensor::{Scalar, Tensor};

use crate::error::{CoreError, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 5e-4 }
    }
}

/// First and second moments per parameter, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S: Scalar> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn zeros(store: &ParamStore<S>) -> Self {
        let z: Vec<Tensor<S>> = store.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        OptimizerState { m: z.clone(), v: z, step: 0 }
    }
}

/// `lr0 * (1 + cos(pi e / E)) / 2`.
pub fn cosine_lr(epoch: usize, total: usize, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total as f64).cos())
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
pub fn clip_grad_norm<S: Scalar>(grads: &mut [Tensor<S>], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data()).map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = S::of(max_norm / norm);
        grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= s));
    }
    norm
}

impl AdamW {
    /// One update; decay applies only to parameters flagged for it.
    pub fn step<S: Scalar>(
        &self,
        store: &mut ParamStore<S>,
        grads: &[Tensor<S>],
        state: &mut OptimizerState<S>,
        lr: f64,
    ) -> Result<()> {
        for (p, g) in store.iter().zip(grads) {
            if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(CoreError::Numerical(format!(
                    "non-finite gradient in {} at element {i}: {}",
                    p.name,
                    g.data()[i]
                )));
            }
        }
        state.step += 1;
        let t = state.step as i32;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let one = S::one();
        let c1 = S::of(1.0 - self.beta1.powi(t));
        let c2 = S::of(1.0 - self.beta2.powi(t));
        let eps = S::of(self.eps);
        let lr_s = S::of(lr);
        for (i, p) in store.iter_mut().enumerate() {
            let wd = if p.decay { S::of(self.weight_decay) } else { S::zero() };
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (j, (th, &gj)) in p.value.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *th = *th - lr_s * (mh / (vh.sqrt() + eps) + wd * *th);
            }
        }
        Ok(())
    }
}
