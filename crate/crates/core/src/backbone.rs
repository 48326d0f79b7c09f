//! Small multi-stage convolutional feature extractor.

use mdhr_tensor::{Scalar, Tensor, TensorError, Var};
use rand::Rng;

use crate::config::BackboneConfig;
use crate::error::Result;
use crate::params::{kaiming_uniform, Bound, ParamId, ParamStore};

#[derive(Clone, Copy, Debug)]
struct ConvIds {
    weight: ParamId,
    bias: ParamId,
}

/// Each stage is `conv3x3(stride) -> relu -> conv3x3 -> relu`.
#[derive(Clone, Debug)]
pub struct Backbone {
    cfg: BackboneConfig,
    stages: Vec<[ConvIds; 2]>,
}

impl Backbone {
    pub fn new<S: Scalar>(cfg: &BackboneConfig, store: &mut ParamStore<S>, rng: &mut impl Rng) -> Self {
        let mut cin = cfg.in_channels;
        let mut stages = Vec::new();
        for (l, &c) in cfg.stage_channels.iter().enumerate() {
            let mut conv = |j: usize, cin: usize| {
                let w = kaiming_uniform(&[c, cin, 3, 3], cin * 9, rng);
                ConvIds {
                    weight: store.add(format!("backbone.stage{l}.conv{j}.weight"), w, true),
                    bias: store.add(format!("backbone.stage{l}.conv{j}.bias"), Tensor::zeros([c]), false),
                }
            };
            let first = conv(1, cin);
            let second = conv(2, c);
            stages.push([first, second]);
            cin = c;
        }
        Backbone { cfg: cfg.clone(), stages }
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    /// `[n, C, H, H]` frames to one feature map per stage.
    pub fn forward<'t, S: Scalar>(&self, p: &Bound<'t, S>, frames: Var<'t, S>) -> Result<Vec<Var<'t, S>>> {
        let shape = frames.shape();
        let want = [self.cfg.in_channels, self.cfg.input_size, self.cfg.input_size];
        if shape.len() != 4 || shape[1..] != want {
            return Err(TensorError::Dimension(format!("backbone expects [n, {}, {}, {}], got {shape:?}", want[0], want[1], want[2])).into());
        }
        let mut x = frames;
        let mut out = Vec::with_capacity(self.stages.len());
        for (stage, &stride) in self.stages.iter().zip(&self.cfg.stage_strides) {
            x = x.conv2d(p.var(stage[0].weight), Some(p.var(stage[0].bias)), stride, 1)?.relu();
            x = x.conv2d(p.var(stage[1].weight), Some(p.var(stage[1].bias)), 1, 1)?.relu();
            out.push(x);
        }
        Ok(out)
    }
}
