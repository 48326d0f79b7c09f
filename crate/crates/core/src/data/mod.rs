//! Video datasets on disk, batching and the synthetic generator.
//!
//! Layout: `<split>/video_XXXX/frames.mdt` holds a `[T_v, 3, H, H]` tensor,
//! `labels.json` holds `{"au_ids": [...], "labels": [[0, 1, ...], ...]}`.

mod sampler;
pub mod synth;

use std::path::{Path, PathBuf};

use mdhr_tensor::{io, Scalar, Tensor};
use serde::{Deserialize, Serialize};

pub use sampler::{eval_clips, pad_video, source_frame, train_clips, Clip};

use crate::combo::make_combo_targets;
use crate::config::RegionMap;
use crate::error::{at_path, CoreError, Result};

pub const FRAMES_FILE: &str = "frames.mdt";
pub const LABELS_FILE: &str = "labels.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFile {
    pub au_ids: Vec<u32>,
    pub labels: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub name: String,
    /// `[T_v, C, H, H]`.
    pub frames: Tensor<f32>,
    /// `T_v` rows of `N` binary labels.
    pub labels: Vec<Vec<u8>>,
}

impl Video {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn write_video(dir: &Path, video: &Video, au_ids: &[u32]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    let fp = dir.join(FRAMES_FILE);
    io::save(&fp, &video.frames, io::Payload::F32).map_err(|e| at_path(&fp, e))?;
    let lf = LabelFile { au_ids: au_ids.to_vec(), labels: video.labels.clone() };
    let lp = dir.join(LABELS_FILE);
    std::fs::write(&lp, serde_json::to_string(&lf).expect("labels serialize")).map_err(|e| CoreError::io(&lp, e))
}

/// Reads one video directory; with `expect_aus`, the label columns must match.
pub fn read_video(dir: &Path, expect_aus: Option<&[u32]>) -> Result<(Video, Vec<u32>)> {
    let fp = dir.join(FRAMES_FILE);
    let frames: Tensor<f32> = io::load(&fp).map_err(|e| at_path(&fp, e))?;
    let lp = dir.join(LABELS_FILE);
    let text = std::fs::read_to_string(&lp).map_err(|e| CoreError::io(&lp, e))?;
    let lf: LabelFile =
        serde_json::from_str(&text).map_err(|e| CoreError::Format { path: lp.clone(), msg: e.to_string() })?;
    let field = format!("{}", lp.display());
    if let Some(want) = expect_aus {
        if lf.au_ids != want {
            return Err(CoreError::validation(field, format!("au_ids {:?} do not match the config's {want:?}", lf.au_ids)));
        }
    }
    if frames.rank() != 4 || frames.shape()[0] != lf.labels.len() {
        return Err(CoreError::validation(
            field,
            format!("{} label rows for frames of shape {:?}", lf.labels.len(), frames.shape()),
        ));
    }
    if let Some(r) = lf.labels.iter().position(|r| r.len() != lf.au_ids.len() || r.iter().any(|&v| v > 1)) {
        return Err(CoreError::validation(field, format!("row {r} is not {} binary labels", lf.au_ids.len())));
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((Video { name, frames, labels: lf.labels }, lf.au_ids))
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub au_ids: Vec<u32>,
    pub videos: Vec<Video>,
}

/// One training or evaluation batch.
pub struct Batch<S: Scalar> {
    /// `[B, T + 2k, C, H, H]`.
    pub frames: Tensor<S>,
    /// `[B, T, N]`.
    pub labels: Tensor<S>,
    pub labels_u8: Vec<u8>,
    /// `[B * T]`, false at tail positions past the end of a video.
    pub mask: Vec<bool>,
    /// Per region, `[B * T]` combination indices.
    pub combos: Vec<Vec<usize>>,
    pub clips: Vec<Clip>,
}

impl Dataset {
    /// Loads every `video_*` directory under `dir` in name order.
    pub fn load(dir: &Path, expect_aus: Option<&[u32]>) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("video_")))
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(CoreError::Config(format!("no video_* directories under {}", dir.display())));
        }
        let mut au_ids: Option<Vec<u32>> = expect_aus.map(|a| a.to_vec());
        let mut videos = Vec::with_capacity(dirs.len());
        for d in &dirs {
            let (v, ids) = read_video(d, au_ids.as_deref())?;
            au_ids.get_or_insert(ids);
            videos.push(v);
        }
        Ok(Dataset { au_ids: au_ids.unwrap_or_default(), videos })
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.len()).collect()
    }

    /// Per-AU active frame counts and the total frame count.
    pub fn label_counts(&self) -> (Vec<u64>, u64) {
        let mut counts = vec![0u64; self.au_ids.len()];
        let mut total = 0;
        for v in &self.videos {
            for row in &v.labels {
                total += 1;
                counts.iter_mut().zip(row).for_each(|(c, &y)| *c += y as u64);
            }
        }
        (counts, total)
    }

    /// Assembles padded clips of `t` counted frames each.
    pub fn batch<S: Scalar>(&self, clips: &[Clip], t: usize, k: usize, regions: &RegionMap) -> Batch<S> {
        let f = t + 2 * k;
        let n = self.au_ids.len();
        let frame_shape = self.videos[clips[0].video].frames.shape()[1..].to_vec();
        let per: usize = frame_shape.iter().product();
        let mut frames = Vec::with_capacity(clips.len() * f * per);
        let mut labels = Vec::with_capacity(clips.len() * t * n);
        let mut mask = Vec::with_capacity(clips.len() * t);
        for c in clips {
            let v = &self.videos[c.video];
            let data = v.frames.data();
            for j in 0..f {
                let s = source_frame(c.start, j, k, v.len());
                frames.extend(data[s * per..(s + 1) * per].iter().map(|&x| S::of(x as f64)));
            }
            for j in 0..t {
                let s = (c.start + j).min(v.len() - 1);
                labels.extend_from_slice(&v.labels[s]);
                mask.push(c.start + j < v.len());
            }
        }
        let rows: Vec<Vec<u8>> = labels.chunks(n).map(|r| r.to_vec()).collect();
        let combos = make_combo_targets(&rows, &self.au_ids, regions);
        let shape = [vec![clips.len(), f], frame_shape].concat();
        Batch {
            frames: Tensor::new(shape, frames).expect("batch shape"),
            labels: Tensor::from_fn([clips.len(), t, n], |i| S::of(labels[i] as f64)),
            labels_u8: labels,
            mask,
            combos,
            clips: clips.to_vec(),
        }
    }
}
