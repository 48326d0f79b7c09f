//! Synthetic oracle dataset: one Gaussian blob per AU inside its home
//! region's image band. A blob orbits its rest point while its AU is
//! "on" and stays still otherwise; the label is 1 exactly when the blob
//! moved by more than the threshold since the previous frame.

use std::path::Path;

use mdhr_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_video, Video};
use crate::config::{RegionMap, REGION_NAMES};
use crate::error::{CoreError, Result};
use crate::hsr::REGION_ROWS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionScale {
    Coarse,
    Fine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuSynth {
    pub id: u32,
    pub region: String,
    pub scale: MotionScale,
    /// Blob standard deviation in pixels.
    pub sigma: f64,
    /// Orbit radius in pixels.
    pub amplitude: f64,
    /// Per-frame displacement above which the AU is labelled active.
    pub threshold: f64,
    /// Rest position `(x, y)` in pixels.
    pub center: [f64; 2],
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub image_size: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub frames_per_video: usize,
    pub noise: f64,
    pub seed: u64,
    /// Orbit angular speed in radians per frame while active.
    pub omega: f64,
    /// Per-frame probability of toggling an AU's on/off state.
    pub switch_prob: f64,
    /// Probability that an AU starts a video switched on.
    pub active_prob: f64,
    pub aus: Vec<AuSynth>,
}

/// Displacement per frame of an active blob.
pub fn step_length(amplitude: f64, omega: f64) -> f64 {
    2.0 * amplitude * (omega / 2.0).sin()
}

impl Default for SynthSpec {
    fn default() -> Self {
        let omega = 2.0 * std::f64::consts::PI / 40.0;
        let au = |id, region: &str, scale, center: [f64; 2], color| {
            let (sigma, amplitude) = match scale {
                MotionScale::Coarse => (6.0, 6.0),
                MotionScale::Fine => (3.0, 2.5),
            };
            AuSynth {
                id,
                region: region.to_string(),
                scale,
                sigma,
                amplitude,
                threshold: 0.5 * step_length(amplitude, omega),
                center,
                color,
            }
        };
        use MotionScale::*;
        SynthSpec {
            image_size: 112,
            n_train: 40,
            n_eval: 10,
            frames_per_video: 96,
            noise: 0.02,
            seed: 0,
            omega,
            switch_prob: 1.0 / 24.0,
            active_prob: 0.5,
            aus: vec![
                au(1, "up", Coarse, [20.0, 24.0], [1.0, 0.2, 0.2]),
                au(2, "up", Fine, [42.0, 24.0], [0.2, 1.0, 0.2]),
                au(4, "up", Coarse, [70.0, 24.0], [0.2, 0.2, 1.0]),
                au(7, "up", Fine, [96.0, 24.0], [1.0, 1.0, 0.2]),
                au(6, "mid", Coarse, [30.0, 56.0], [1.0, 0.2, 1.0]),
                au(9, "mid", Fine, [82.0, 56.0], [0.2, 1.0, 1.0]),
                au(12, "low", Coarse, [30.0, 88.0], [1.0, 0.6, 0.2]),
                au(25, "low", Fine, [82.0, 88.0], [0.6, 0.2, 1.0]),
            ],
        }
    }
}

/// Positions of every blob for frames `-1 ..= T-1` (index 0 is frame -1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub au_ids: Vec<u32>,
    pub thresholds: Vec<f64>,
    /// `positions[n][t + 1] = (x, y)`.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl Trajectory {
    /// Labels recomputed from the stored positions.
    pub fn labels(&self) -> Vec<Vec<u8>> {
        let t = self.positions[0].len() - 1;
        (0..t)
            .map(|f| {
                self.positions
                    .iter()
                    .zip(&self.thresholds)
                    .map(|(p, &thr)| {
                        let (a, b) = (p[f], p[f + 1]);
                        (((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt() > thr) as u8
                    })
                    .collect()
            })
            .collect()
    }
}

/// Pixel rows `[lo, hi)` of a region band.
pub fn band_rows(region: usize, image_size: usize) -> (f64, f64) {
    let (a, b) = REGION_ROWS[region];
    (a as f64 * image_size as f64 / 7.0, b as f64 * image_size as f64 / 7.0)
}

fn region_index(name: &str) -> Option<usize> {
    REGION_NAMES.iter().position(|r| *r == name)
}

impl SynthSpec {
    pub fn au_ids(&self) -> Vec<u32> {
        self.aus.iter().map(|a| a.id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size < 7 || self.image_size % 7 != 0 {
            return Err(CoreError::validation("image_size", "must be a positive multiple of 7"));
        }
        if self.frames_per_video == 0 {
            return Err(CoreError::validation("frames_per_video", "must be positive"));
        }
        if !(self.noise >= 0.0) {
            return Err(CoreError::validation("noise", "must be non-negative"));
        }
        for (f, p) in [("switch_prob", self.switch_prob), ("active_prob", self.active_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::validation(f, "must lie in [0, 1]"));
            }
        }
        if self.aus.is_empty() {
            return Err(CoreError::validation("aus", "need at least one AU"));
        }
        let mut ids = std::collections::HashSet::new();
        for (i, a) in self.aus.iter().enumerate() {
            let f = |name: &str| format!("aus[{i}].{name}");
            if !ids.insert(a.id) {
                return Err(CoreError::validation(f("id"), format!("AU{} appears twice", a.id)));
            }
            if region_index(&a.region).is_none() {
                return Err(CoreError::validation(f("region"), format!("unknown region `{}`", a.region)));
            }
            if !(a.sigma > 0.0) {
                return Err(CoreError::validation(f("sigma"), "must be positive"));
            }
            if !(a.amplitude >= 0.0) {
                return Err(CoreError::validation(f("amplitude"), "must be non-negative"));
            }
            if !(a.threshold >= 0.0) {
                return Err(CoreError::validation(f("threshold"), "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Checks every AU's generative region against its home region.
    pub fn check_regions(&self, regions: &RegionMap) -> Result<()> {
        for (i, a) in self.aus.iter().enumerate() {
            let home = regions.home_of(a.id).map(|h| REGION_NAMES[h]);
            if home != Some(a.region.as_str()) {
                return Err(CoreError::validation(
                    format!("aus[{i}].region"),
                    format!("AU{} is generated in `{}` but homed in {home:?}", a.id, a.region),
                ));
            }
        }
        Ok(())
    }

    /// Renders one video. `stream` separates videos drawn from the same seed.
    pub fn generate_video(&self, stream: u64) -> (Video, Trajectory) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let t = self.frames_per_video;
        let h = self.image_size;
        let mut positions = Vec::with_capacity(self.aus.len());
        for a in &self.aus {
            let region = region_index(&a.region).expect("validated");
            let (lo, hi) = band_rows(region, h);
            let mut on = rng.gen_bool(self.active_prob);
            let mut theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut clipped = 0usize;
            let mut track = Vec::with_capacity(t + 1);
            for f in 0..=t {
                if f > 0 {
                    if rng.gen_bool(self.switch_prob) {
                        on = !on;
                    }
                    if on {
                        theta += self.omega;
                    }
                }
                let x = a.center[0] + a.amplitude * theta.cos();
                let y = a.center[1] + a.amplitude * theta.sin();
                let (ylo, yhi) = (lo + 2.0 * a.sigma, hi - 2.0 * a.sigma);
                let (xlo, xhi) = (2.0 * a.sigma, h as f64 - 2.0 * a.sigma);
                let cx = x.clamp(xlo.min(xhi), xhi.max(xlo));
                let cy = y.clamp(ylo.min(yhi), yhi.max(ylo));
                if cx != x || cy != y {
                    clipped += 1;
                }
                track.push([cx, cy]);
            }
            if clipped > 0 {
                log::warn!("AU{} blob left its band in {clipped} frames of stream {stream}; clipped", a.id);
            }
            positions.push(track);
        }
        let traj = Trajectory {
            au_ids: self.au_ids(),
            thresholds: self.aus.iter().map(|a| a.threshold).collect(),
            positions,
        };
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("valid noise");
        let plane = h * h;
        let mut data = vec![0f32; t * 3 * plane];
        for f in 0..t {
            let img = &mut data[f * 3 * plane..(f + 1) * 3 * plane];
            for (a, track) in self.aus.iter().zip(&traj.positions) {
                let (lo, hi) = band_rows(region_index(&a.region).expect("validated"), h);
                let [cx, cy] = track[f + 1];
                let reach = 3.0 * a.sigma;
                let y0 = (cy - reach).floor().max(lo) as usize;
                let y1 = ((cy + reach).ceil().min(hi - 1.0)) as usize;
                let x0 = (cx - reach).floor().max(0.0) as usize;
                let x1 = ((cx + reach).ceil().min(h as f64 - 1.0)) as usize;
                let inv = 1.0 / (2.0 * a.sigma * a.sigma);
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        let d2 = (xx as f64 - cx).powi(2) + (yy as f64 - cy).powi(2);
                        let gval = (-d2 * inv).exp();
                        for ch in 0..3 {
                            img[ch * plane + yy * h + xx] += (a.color[ch] * gval) as f32;
                        }
                    }
                }
            }
            if self.noise > 0.0 {
                for v in img.iter_mut() {
                    *v += noise.sample(&mut rng) as f32;
                }
            }
        }
        let frames = Tensor::new([t, 3, h, h], data).expect("frame shape");
        let video = Video { name: format!("video_{stream:04}"), frames, labels: traj.labels() };
        (video, traj)
    }

    /// Writes `train/` and `eval/` splits plus `spec.json` under `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        self.validate()?;
        let ids = self.au_ids();
        let jobs: Vec<(&str, usize, u64)> = (0..self.n_train)
            .map(|i| ("train", i, i as u64))
            .chain((0..self.n_eval).map(|i| ("eval", i, (self.n_train + i) as u64)))
            .collect();
        jobs.par_iter().try_for_each(|&(split, i, stream)| -> Result<()> {
            let (mut video, traj) = self.generate_video(stream);
            video.name = format!("video_{i:04}");
            let dir = out.join(split).join(&video.name);
            write_video(&dir, &video, &ids)?;
            let tp = dir.join("trajectory.json");
            std::fs::write(&tp, serde_json::to_string(&traj).expect("trajectory serializes"))
                .map_err(|e| CoreError::io(&tp, e))
        })?;
        let sp = out.join("spec.json");
        std::fs::write(&sp, serde_json::to_string_pretty(self).expect("spec serializes")).map_err(|e| CoreError::io(&sp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| CoreError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}
