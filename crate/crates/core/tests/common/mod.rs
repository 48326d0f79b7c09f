//! Tiny geometry shared by the end-to-end tests.
#![allow(dead_code)]

use std::path::Path;

use mdhr_core::config::{BackboneConfig, DataConfig, HsrConfig, MfdConfig, RegionMap, RunConfig, TrainConfig};
use mdhr_core::data::synth::{step_length, AuSynth, MotionScale, SynthSpec};

pub fn tiny_spec() -> SynthSpec {
    let omega = 0.4;
    let au = |id, region: &str, center, amplitude| AuSynth {
        id,
        region: region.into(),
        scale: MotionScale::Coarse,
        sigma: 1.5,
        amplitude,
        threshold: 0.5 * step_length(amplitude, omega),
        center,
        color: [1.0, 0.5, 0.25],
    };
    SynthSpec {
        image_size: 28,
        n_train: 4,
        n_eval: 2,
        frames_per_video: 24,
        omega,
        switch_prob: 0.15,
        aus: vec![au(1, "up", [8.0, 6.0], 1.5), au(6, "mid", [14.0, 14.0], 1.0), au(12, "low", [20.0, 22.0], 1.5)],
        ..Default::default()
    }
}

pub fn tiny_config(data: &Path, out: &Path) -> RunConfig {
    RunConfig {
        au_ids: vec![1, 6, 12],
        regions: RegionMap { up: vec![1], mid: vec![6], low: vec![12] },
        backbone: BackboneConfig { in_channels: 3, input_size: 28, stage_channels: vec![3, 4, 4], stage_strides: vec![2, 2, 1] },
        mfd: MfdConfig { k: 1, ..Default::default() },
        hsr: HsrConfig { au_dim: 4 },
        train: TrainConfig { batch_size: 2, lr: 1e-3, epochs: 2, validation_interval: 1, t: 6, ..Default::default() },
        data: DataConfig { train_dir: Some(data.join("train")), eval_dir: Some(data.join("eval")) },
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}
