//! Uniform index selection.
//!
//! One rule is used everywhere (frames, thumbnail frames, tokens): pick the
//! center of each of `select` equal segments of `[0, total)`,
//! `floor((2j + 1) * total / (2 * select))`. Integer arithmetic only.

use crate::error::{Error, Result};
use crate::model::Frame;

/// `select` strictly increasing indices spread uniformly over `[0, total)`.
pub fn uniform_indices(total: usize, select: usize) -> Result<Vec<usize>> {
    if select == 0 || select > total {
        return Err(Error::InvalidSelection { total, select });
    }
    let total_w = total as u128;
    let denom = 2 * select as u128;
    Ok((0..select as u128).map(|j| ((2 * j + 1) * total_w / denom) as usize).collect())
}

/// Picks `count` frames at [`uniform_indices`], keeping temporal order.
pub fn select_uniform(frames: &[Frame], count: usize) -> Result<Vec<&Frame>> {
    Ok(uniform_indices(frames.len(), count)?.into_iter().map(|i| &frames[i]).collect())
}

/// Picks the `n_thumb` equidistant frames that make up a thumbnail.
pub fn select_equidistant(frames: &[Frame], n_thumb: usize) -> Result<Vec<&Frame>> {
    if !n_thumb.is_multiple_of(2) {
        return Err(Error::OddThumbFrames(n_thumb));
    }
    select_uniform(frames, n_thumb)
}
