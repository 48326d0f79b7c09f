//! Boundary padding and clip selection.

use mdhr_tensor::TensorError;
use rand::Rng;

use crate::error::Result;

/// `k` copies of the first frame, the video, then `k` copies of the last.
pub fn pad_video<F: Clone>(frames: &[F], k: usize) -> Result<Vec<F>> {
    let (first, last) = match (frames.first(), frames.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(TensorError::Usage("cannot pad an empty video".into()).into()),
    };
    let mut out = Vec::with_capacity(frames.len() + 2 * k);
    out.extend(std::iter::repeat(first).take(k).cloned());
    out.extend_from_slice(frames);
    out.extend(std::iter::repeat(last).take(k).cloned());
    Ok(out)
}

/// Source frame of position `j` in a padded clip of `t + 2k` frames starting
/// at original frame `start`. Covers both the boundary padding and the
/// repetition of the last frame past the end of the video.
pub fn source_frame(start: usize, j: usize, k: usize, len: usize) -> usize {
    (start + j).saturating_sub(k).min(len - 1)
}

/// One clip of `t` counted frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Clip {
    pub video: usize,
    pub start: usize,
}

/// One random clip per video, in video order.
pub fn train_clips(lengths: &[usize], t: usize, rng: &mut impl Rng) -> Vec<Clip> {
    lengths
        .iter()
        .enumerate()
        .map(|(video, &len)| Clip { video, start: if len > t { rng.gen_range(0..=len - t) } else { 0 } })
        .collect()
}

/// Contiguous clips at offsets `0, t, 2t, ...` covering every frame once.
pub fn eval_clips(lengths: &[usize], t: usize) -> Vec<Clip> {
    lengths
        .iter()
        .enumerate()
        .flat_map(|(video, &len)| (0..len.div_ceil(t)).map(move |i| Clip { video, start: i * t }))
        .collect()
}
