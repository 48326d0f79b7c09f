//! Region combination coding: bit `i` (the region's `i`-th AU) contributes `2^i`.

use mdhr_tensor::TensorError;

use crate::config::RegionMap;
use crate::error::Result;

pub fn encode_combination(bits: &[bool]) -> usize {
    bits.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
}

pub fn decode_combination(index: usize, n_sub: usize) -> Result<Vec<bool>> {
    if n_sub >= usize::BITS as usize || index >= 1usize << n_sub {
        return Err(TensorError::Domain(format!("combination index {index} out of range for {n_sub} AUs")).into());
    }
    Ok((0..n_sub).map(|i| index >> i & 1 == 1).collect())
}

/// Per region, the combination index of every frame of `labels[t][n]`
/// (columns in `au_ids` order).
pub fn make_combo_targets(labels: &[Vec<u8>], au_ids: &[u32], regions: &RegionMap) -> Vec<Vec<usize>> {
    regions
        .regions()
        .iter()
        .map(|region| {
            let cols: Vec<usize> =
                region.iter().map(|a| au_ids.iter().position(|x| x == a).expect("region AU in au_ids")).collect();
            labels
                .iter()
                .map(|row| encode_combination(&cols.iter().map(|&c| row[c] != 0).collect::<Vec<_>>()))
                .collect()
        })
        .collect()
}
