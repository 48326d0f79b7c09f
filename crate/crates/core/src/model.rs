//! The full pipeline: backbone, dynamics, relationships, temporal head.

use mdhr_tensor::{Scalar, Tensor, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::Backbone;
use crate::config::{RunConfig, TOP_SIZE};
use crate::error::Result;
use crate::head::Head;
use crate::hsr::{Hsr, HsrOutput};
use crate::mfd::Mfd;
use crate::params::{Bound, ParamStore};

#[derive(Clone, Debug)]
pub struct Mdhr {
    pub cfg: RunConfig,
    pub backbone: Backbone,
    /// `None` runs the ablation where `G = x_L`.
    pub mfd: Option<Mfd>,
    pub hsr: Hsr,
    pub head: Head,
}

pub struct Forward<'t, S: Scalar> {
    /// `[B, T, N]` occurrence probabilities.
    pub probs: Var<'t, S>,
    pub hsr: HsrOutput<'t, S>,
    /// Scale weights `[B * T, L, 7, 7]` when dynamics are enabled.
    pub scale_weights: Option<Var<'t, S>>,
}

impl Mdhr {
    /// Architecture plus freshly initialised parameters, seeded from `train.seed`.
    pub fn new<S: Scalar>(cfg: &RunConfig) -> Result<(Self, ParamStore<S>)> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let backbone = Backbone::new(&cfg.backbone, &mut store, &mut rng);
        let mfd = cfg.mfd.enabled.then(|| Mfd::new(cfg, &mut store, &mut rng));
        let hsr = Hsr::new(cfg, &mut store, &mut rng);
        let head = Head::new(cfg, &mut store, &mut rng);
        Ok((Mdhr { cfg: cfg.clone(), backbone, mfd, hsr, head }, store))
    }

    pub fn k(&self) -> usize {
        self.cfg.mfd.k
    }

    /// Frames per padded clip for clip length `t`.
    pub fn clip_frames(&self, t: usize) -> usize {
        t + 2 * self.k()
    }

    /// `frames: [B, T + 2k, C, H, H]` padded clips.
    pub fn forward<'t, S: Scalar>(&self, p: &Bound<'t, S>, frames: Var<'t, S>) -> Result<Forward<'t, S>> {
        let shape = frames.shape();
        if shape.len() != 5 || shape[1] <= 2 * self.k() {
            return Err(TensorError::Dimension(format!(
                "expected [B, T + {}, C, H, W] clips, got {shape:?}",
                2 * self.k()
            ))
            .into());
        }
        let (b, f) = (shape[0], shape[1]);
        let t = f - 2 * self.k();
        let flat = frames.reshape([vec![b * f], shape[2..].to_vec()].concat())?;
        let pyramid = self.backbone.forward(p, flat)?;
        let (g, scale_weights) = match &self.mfd {
            Some(mfd) => {
                let out = mfd.forward(p, &pyramid, b, t)?;
                (out.g, Some(out.weights))
            }
            None => {
                let c = self.cfg.backbone.top_channels();
                let top = pyramid[pyramid.len() - 1]
                    .reshape([b, f, c * TOP_SIZE * TOP_SIZE])?
                    .slice_axis(1, self.k(), self.k() + t)?
                    .reshape([b * t, c, TOP_SIZE, TOP_SIZE])?;
                (top, None)
            }
        };
        let hsr = self.hsr.forward(p, g)?;
        let probs = self.head.forward(p, hsr.nodes, b, t)?;
        Ok(Forward { probs, hsr, scale_weights })
    }

    /// Probabilities only, on a throwaway tape with constant parameters.
    pub fn predict<S: Scalar>(&self, store: &ParamStore<S>, frames: &Tensor<S>) -> Result<Tensor<S>> {
        let tape = mdhr_tensor::Tape::<S>::new();
        let p = store.bind(&tape);
        let x = tape.constant(frames.clone());
        Ok(self.forward(&p, x)?.probs.value().as_ref().clone())
    }
}
