//! Visual-token compression strategies.
//!
//! Token-level strategies (concat, pooling, sampling) work on per-frame
//! tensors; grid strategies and thumbnail-and-sampling need the raw frames
//! because they compose new images before encoding. Per-frame and
//! per-grid encoding runs on the rayon pool; results are gathered in input
//! order so output never depends on scheduling.

use std::borrow::Borrow;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{compose_thumbnail, fit_square, ThumbnailLayout};
use crate::model::{
    Frame, PackMeta, PoolKind, PoolMode, Provenance, StrategyKind, StrategySpec, TokenPack, TokenTensor,
    ValidatedConfig,
};
use crate::sampler::{select_uniform, uniform_indices};
use crate::tower::VisionTowerSpec;

fn common_dim<T: Borrow<TokenTensor>>(tensors: &[T]) -> Result<usize> {
    let dim = tensors.first().ok_or(Error::EmptyInput)?.borrow().dim();
    for t in tensors {
        if t.borrow().dim() != dim {
            return Err(Error::DimMismatch { expected: dim, actual: t.borrow().dim() });
        }
    }
    Ok(dim)
}

/// Frame-major concatenation. Provenance survives only if every input has
/// it.
pub fn concat_tokens<T: Borrow<TokenTensor>>(per_frame: &[T]) -> Result<TokenTensor> {
    let dim = common_dim(per_frame)?;
    let n: usize = per_frame.iter().map(|t| t.borrow().num_tokens()).sum();
    let mut values = Vec::with_capacity(n * dim);
    let mut provenance = Some(Vec::with_capacity(n));
    for t in per_frame {
        let t = t.borrow();
        values.extend_from_slice(t.values());
        match (provenance.as_mut(), t.provenance()) {
            (Some(acc), Some(p)) => acc.extend_from_slice(p),
            _ => provenance = None,
        }
    }
    TokenTensor::new(n, dim, values, provenance)
}

/// Reduces one window of tokens to a single token.
fn reduce_window<'a>(mode: PoolMode, dim: usize, rows: impl Iterator<Item = &'a [f32]>, out: &mut Vec<f32>) {
    match mode {
        PoolMode::Avg => {
            let mut acc = vec![0f64; dim];
            let mut count = 0usize;
            for row in rows {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v as f64;
                }
                count += 1;
            }
            out.extend(acc.iter().map(|a| (a / count as f64) as f32));
        }
        PoolMode::Max => {
            let mut acc = vec![f32::NEG_INFINITY; dim];
            for row in rows {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a = a.max(v);
                }
            }
            out.extend(acc);
        }
    }
}

/// Window start offsets over a sequence of `len` tokens. The last window
/// is the first one that reaches the end; it may be shorter than `kernel`.
pub(crate) fn seq_windows(len: usize, kernel: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut windows = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + kernel).min(len);
        windows.push((start, end));
        if start + kernel >= len {
            break;
        }
        start += stride;
    }
    windows
}

fn isqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt() as usize;
    (r.saturating_sub(1)..=r + 1).find(|&s| s * s == n)
}

fn pool_frame(
    t: &TokenTensor,
    mode: PoolMode,
    kind: PoolKind,
    kernel: usize,
    stride: usize,
    values: &mut Vec<f32>,
    provenance: &mut Option<Vec<Provenance>>,
) -> Result<usize> {
    let dim = t.dim();
    let src_prov = t.provenance();
    let emit = |first: usize, prov: &mut Option<Vec<Provenance>>| match (prov.as_mut(), src_prov) {
        (Some(acc), Some(p)) => acc.push(p[first]),
        _ => *prov = None,
    };
    match kind {
        PoolKind::Seq1d => {
            let windows = seq_windows(t.num_tokens(), kernel, stride);
            for &(start, end) in &windows {
                reduce_window(mode, dim, (start..end).map(|i| t.token(i)), values);
                emit(start, provenance);
            }
            Ok(windows.len())
        }
        PoolKind::Spatial2d => {
            let side = isqrt(t.num_tokens()).ok_or(Error::NotSquareGrid(t.num_tokens()))?;
            let out_side = if side >= kernel { (side - kernel) / stride + 1 } else { 0 };
            for orow in 0..out_side {
                for ocol in 0..out_side {
                    let (r0, c0) = (orow * stride, ocol * stride);
                    let window = (r0..r0 + kernel)
                        .flat_map(move |r| (c0..c0 + kernel).map(move |c| r * side + c))
                        .map(|i| t.token(i));
                    reduce_window(mode, dim, window, values);
                    emit(r0 * side + c0, provenance);
                }
            }
            Ok(out_side * out_side)
        }
    }
}

/// Pools each frame's tokens independently and concatenates the results.
///
/// `Spatial2d` treats the per-frame tokens as a square row-major patch grid
/// and drops incomplete windows. `Seq1d` pools the token sequence and
/// keeps a short tail window, reduced over its actual length.
pub fn pool_tokens<T: Borrow<TokenTensor>>(
    per_frame: &[T],
    mode: PoolMode,
    kind: PoolKind,
    kernel: usize,
    stride: usize,
) -> Result<TokenTensor> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidPoolWindow { kernel, stride });
    }
    let dim = common_dim(per_frame)?;
    let mut values = Vec::new();
    let mut provenance = Some(Vec::new());
    let mut n = 0;
    for t in per_frame {
        n += pool_frame(t.borrow(), mode, kind, kernel, stride, &mut values, &mut provenance)?;
    }
    TokenTensor::new(n, dim, values, provenance)
}

/// Uniformly samples `target` tokens, copying each one bit-exactly.
pub fn sample_tokens(all: &TokenTensor, target: usize) -> Result<TokenTensor> {
    let idx = uniform_indices(all.num_tokens(), target)?;
    let mut values = Vec::with_capacity(target * all.dim());
    for &i in &idx {
        values.extend_from_slice(all.token(i));
    }
    let provenance = all.provenance().map(|p| idx.iter().map(|&i| p[i]).collect());
    TokenTensor::new(target, all.dim(), values, provenance)
}

/// Resizes each frame to the tower resolution and encodes it.
pub fn encode_frames<F: Borrow<Frame> + Sync>(frames: &[F], tower: &VisionTowerSpec) -> Result<Vec<TokenTensor>> {
    frames.par_iter().map(|f| tower.encode(&fit_square(f.borrow(), tower.resolution())?)).collect()
}

/// Composes consecutive groups of `frames_per_grid` frames into grid-view
/// images and encodes each one. Grid `g` gets source index `g`.
pub fn encode_grids(
    frames: &[&Frame],
    frames_per_grid: usize,
    layout: ThumbnailLayout,
    tower: &VisionTowerSpec,
) -> Result<Vec<TokenTensor>> {
    if frames_per_grid == 0 || !frames.len().is_multiple_of(frames_per_grid) {
        return Err(Error::NotDivisible { frames: frames.len(), group: frames_per_grid });
    }
    frames
        .par_chunks(frames_per_grid)
        .enumerate()
        .map(|(g, group)| {
            let image = compose_thumbnail(group, layout, tower.resolution())?.with_source_index(g as u32);
            tower.encode(&image)
        })
        .collect()
}

/// The Grids strategy: one grid-view image per group, grid-major.
pub fn build_grids(
    frames: &[Frame],
    frames_per_grid: usize,
    layout: ThumbnailLayout,
    tower: &VisionTowerSpec,
) -> Result<TokenTensor> {
    let refs: Vec<&Frame> = frames.iter().collect();
    concat_tokens(&encode_grids(&refs, frames_per_grid, layout, tower)?)
}

/// The Grid strategy: a single grid-view image of `n_thumb` equidistant
/// frames.
pub fn build_grid(
    frames: &[Frame],
    n_thumb: usize,
    layout: ThumbnailLayout,
    tower: &VisionTowerSpec,
) -> Result<TokenTensor> {
    let picked = select_uniform(frames, n_thumb)?;
    concat_tokens(&encode_grids(&picked, n_thumb, layout, tower)?)
}

fn check_tower(config: &ValidatedConfig, tower: &VisionTowerSpec) -> Result<()> {
    if tower.resolution() != config.encoder_resolution || tower.patch_size() != config.patch_size {
        return Err(Error::ShapeMismatch(format!(
            "tower is {} px / patch {}, config is {} px / patch {}",
            tower.resolution(),
            tower.patch_size(),
            config.encoder_resolution,
            config.patch_size
        )));
    }
    Ok(())
}

fn check_count(config: &ValidatedConfig, actual: usize) -> Result<()> {
    if actual != config.n_frames {
        return Err(Error::FrameCountMismatch { expected: config.n_frames, actual });
    }
    Ok(())
}

/// Thumbnail-and-sampling.
///
/// `n_thumb_frames * n_thumbnails` equidistant frames are split into
/// consecutive groups, each composed into one thumbnail image and encoded.
/// Independently, all frames are encoded and the frame-major token sequence
/// is uniformly sampled down to `budget - n_thumbnails * V` tokens. The
/// pack holds exactly `budget` tokens.
pub fn thumbnail_and_sampling(
    frames: &[Frame],
    config: &ValidatedConfig,
    tower: &VisionTowerSpec,
) -> Result<TokenPack> {
    check_count(config, frames.len())?;
    check_tower(config, tower)?;
    let thumb_frames = select_uniform(frames, config.n_thumb_frames * config.n_thumbnails)?;
    let thumbnails = encode_grids(&thumb_frames, config.n_thumb_frames, config.thumb_layout, tower)?;
    let all = concat_tokens(&encode_frames(frames, tower)?)?;
    let sampled = sample_tokens(&all, config.sampled_tokens())?;
    TokenPack::new(
        sampled,
        thumbnails,
        config.ordering,
        meta(config, StrategyKind::ThumbnailAndSampling, config.n_thumb_frames, config.n_thumbnails),
    )
}

fn meta(config: &ValidatedConfig, strategy: StrategyKind, n_thumb_frames: usize, n_thumbnails: usize) -> PackMeta {
    PackMeta {
        strategy,
        n_frames: config.n_frames,
        n_thumb_frames,
        n_thumbnails,
        tokens_per_image: config.tokens_per_image,
        source_label: String::new(),
    }
}

/// What a strategy consumes.
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Frames(&'a [Frame]),
    /// Pre-extracted per-frame tensors, `V x D` each.
    Features(&'a [TokenTensor]),
}

impl Input<'_> {
    pub fn len(&self) -> usize {
        match self {
            Input::Frames(f) => f.len(),
            Input::Features(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs `config.strategy` on `input`.
///
/// Grid and Grids tokens land in the pack's thumbnail slot (one tensor per
/// grid image); token-level strategies fill the sampled slot.
pub fn run(input: Input<'_>, config: &ValidatedConfig, tower: &VisionTowerSpec) -> Result<TokenPack> {
    check_count(config, input.len())?;
    check_tower(config, tower)?;
    let per_frame = || -> Result<Vec<TokenTensor>> {
        match input {
            Input::Frames(frames) => encode_frames(frames, tower),
            Input::Features(t) => {
                tower.check_features(t, config.n_frames)?;
                Ok(t.to_vec())
            }
        }
    };
    let frames = || match input {
        Input::Frames(f) => Ok(f),
        Input::Features(_) => Err(Error::RequiresFrames),
    };
    let dim = tower.dim();
    let sampled_only = |t: TokenTensor, kind| TokenPack::new(t, Vec::new(), config.ordering, meta(config, kind, 0, 0));
    match config.strategy {
        StrategySpec::Concat => sampled_only(concat_tokens(&per_frame()?)?, StrategyKind::Concat),
        StrategySpec::Pool { mode, kind, kernel, stride } => {
            sampled_only(pool_tokens(&per_frame()?, mode, kind, kernel, stride)?, StrategyKind::Pool)
        }
        StrategySpec::Sample { target } => {
            sampled_only(sample_tokens(&concat_tokens(&per_frame()?)?, target)?, StrategyKind::Sample)
        }
        StrategySpec::Grid => {
            let picked = select_uniform(frames()?, config.n_thumb_frames)?;
            let grids = encode_grids(&picked, config.n_thumb_frames, config.thumb_layout, tower)?;
            TokenPack::new(
                TokenTensor::empty(dim),
                grids,
                config.ordering,
                meta(config, StrategyKind::Grid, config.n_thumb_frames, 1),
            )
        }
        StrategySpec::Grids { frames_per_grid } => {
            let refs: Vec<&Frame> = frames()?.iter().collect();
            let grids = encode_grids(&refs, frames_per_grid, config.thumb_layout, tower)?;
            let n = grids.len();
            TokenPack::new(
                TokenTensor::empty(dim),
                grids,
                config.ordering,
                meta(config, StrategyKind::Grids, frames_per_grid, n),
            )
        }
        StrategySpec::ThumbnailAndSampling { .. } => thumbnail_and_sampling(frames()?, config, tower),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::default_layout;
    use crate::model::CompressionConfig;

    fn seq_tensor(n: usize, dim: usize, frame: u32) -> TokenTensor {
        let vals = (0..n * dim).map(|i| (frame as usize * 1000 + i) as f32).collect();
        let prov = (0..n).map(|i| Provenance::new(frame, i as u32, 0)).collect();
        TokenTensor::new(n, dim, vals, Some(prov)).unwrap()
    }

    fn counted(v: usize, frames: usize) -> Vec<TokenTensor> {
        (0..frames).map(|_| TokenTensor::new(v, 1, vec![0.5; v], None).unwrap()).collect()
    }

    #[test]
    fn concat_counts_and_order() {
        assert_eq!(concat_tokens(&counted(576, 4)).unwrap().num_tokens(), 2304);

        let one = seq_tensor(3, 2, 0);
        assert_eq!(concat_tokens(std::slice::from_ref(&one)).unwrap(), one);

        let a = seq_tensor(3, 2, 0);
        let b = seq_tensor(3, 2, 1);
        let c = concat_tokens(&[&a, &b]).unwrap();
        assert_eq!(c.num_tokens(), 6);
        assert_eq!(&c.values()[..6], a.values());
        assert_eq!(&c.values()[6..], b.values());
        assert_eq!(c.provenance().unwrap()[3], Provenance::new(1, 0, 0));
    }

    #[test]
    fn concat_errors() {
        let a = seq_tensor(3, 2, 0);
        let b = seq_tensor(3, 3, 1);
        assert_eq!(concat_tokens(&[a, b]).unwrap_err().name(), "DimMismatch");
        assert_eq!(concat_tokens::<TokenTensor>(&[]).unwrap_err().name(), "EmptyInput");
    }

    #[test]
    fn pooling_token_counts() {
        let t = pool_tokens(&counted(576, 16), PoolMode::Avg, PoolKind::Spatial2d, 2, 2).unwrap();
        assert_eq!(t.num_tokens(), 2304);
        let t = pool_tokens(&counted(576, 4), PoolMode::Avg, PoolKind::Seq1d, 3, 3).unwrap();
        assert_eq!(t.num_tokens(), 768);
        let t = pool_tokens(&counted(576, 4), PoolMode::Max, PoolKind::Seq1d, 2, 2).unwrap();
        assert_eq!(t.num_tokens(), 1152);
    }

    #[test]
    fn pooling_constants_stay_constant() {
        for mode in [PoolMode::Avg, PoolMode::Max] {
            for kind in [PoolKind::Seq1d, PoolKind::Spatial2d] {
                let t = pool_tokens(&counted(36, 3), mode, kind, 4, 3).unwrap();
                assert!(t.values().iter().all(|&v| v == 0.5));
            }
        }
    }

    #[test]
    fn seq1d_tail_window_uses_actual_length() {
        let t = TokenTensor::new(5, 1, vec![1.0, 2.0, 3.0, 4.0, 10.0], None).unwrap();
        let p = pool_tokens(&[t], PoolMode::Avg, PoolKind::Seq1d, 2, 2).unwrap();
        assert_eq!(p.values(), &[1.5, 3.5, 10.0]);
        assert_eq!(seq_windows(10, 1, 4), vec![(0, 1), (4, 5), (8, 9)]);
        assert_eq!(seq_windows(5, 3, 1), vec![(0, 3), (1, 4), (2, 5)]);
        assert_eq!(seq_windows(2, 5, 1), vec![(0, 2)]);
    }

    #[test]
    fn spatial_pool_hand_computed() {
        // 4x4 grid of values 0..16, 2x2 windows
        let t = TokenTensor::new(16, 1, (0..16).map(|v| v as f32).collect(), None).unwrap();
        let p = pool_tokens(&[&t], PoolMode::Avg, PoolKind::Spatial2d, 2, 2).unwrap();
        assert_eq!(p.values(), &[2.5, 4.5, 10.5, 12.5]);
        let p = pool_tokens(&[&t], PoolMode::Max, PoolKind::Spatial2d, 2, 2).unwrap();
        assert_eq!(p.values(), &[5.0, 7.0, 13.0, 15.0]);
        // 3x3 windows at stride 3 on a 4x4 grid: one complete window
        let p = pool_tokens(&[&t], PoolMode::Avg, PoolKind::Spatial2d, 3, 3).unwrap();
        assert_eq!(p.values(), &[5.0]);
    }

    #[test]
    fn pooling_errors() {
        let t = TokenTensor::new(10, 1, vec![0.0; 10], None).unwrap();
        let err = pool_tokens(&[&t], PoolMode::Avg, PoolKind::Spatial2d, 2, 2).unwrap_err();
        assert_eq!(err.name(), "NotSquareGrid");
        let err = pool_tokens(&[&t], PoolMode::Avg, PoolKind::Seq1d, 0, 2).unwrap_err();
        assert_eq!(err.name(), "InvalidPoolWindow");
    }

    #[test]
    fn pooled_provenance_is_window_origin() {
        let t = seq_tensor(16, 1, 3);
        let p = pool_tokens(&[&t], PoolMode::Avg, PoolKind::Spatial2d, 2, 2).unwrap();
        let rows: Vec<u32> = p.provenance().unwrap().iter().map(|p| p.patch_row).collect();
        assert_eq!(rows, vec![0, 2, 8, 10]);
    }

    #[test]
    fn sampling_examples() {
        let all = concat_tokens(&counted(576, 16)).unwrap();
        assert_eq!(sample_tokens(&all, 2304).unwrap().num_tokens(), 2304);

        let t = seq_tensor(7, 2, 0);
        assert_eq!(sample_tokens(&t, 7).unwrap(), t);

        let t = TokenTensor::new(10, 1, (0..10).map(|v| v as f32).collect(), None).unwrap();
        assert_eq!(sample_tokens(&t, 4).unwrap().values(), &[1.0, 3.0, 6.0, 8.0]);
        assert_eq!(sample_tokens(&t, 11).unwrap_err().name(), "InvalidSelection");
    }

    fn frames(n: usize, size: u32) -> Vec<Frame> {
        (0..n).map(|i| Frame::solid(size, size, [(i * 5) as u8, 100, 200], i as u32).unwrap()).collect()
    }

    #[test]
    fn grids_and_grid_counts() {
        let tower = VisionTowerSpec::stub(336, 14, 2).unwrap();
        let fs = frames(16, 32);
        let l = default_layout(4).unwrap();
        assert_eq!(build_grids(&fs, 4, l, &tower).unwrap().num_tokens(), 2304);
        assert_eq!(build_grids(&fs[..4], 4, l, &tower).unwrap().num_tokens(), 576);
        assert_eq!(build_grids(&fs[..6], 4, l, &tower).unwrap_err().name(), "NotDivisible");

        let t = build_grids(&fs[..6], 6, default_layout(6).unwrap(), &tower).unwrap();
        assert_eq!(t.num_tokens(), 576);
        assert!(t.provenance().unwrap().iter().all(|p| p.frame_index == 0));

        assert_eq!(build_grid(&fs, 4, l, &tower).unwrap().num_tokens(), 576);
    }

    #[test]
    fn thumbnail_and_sampling_counts() {
        let tower = VisionTowerSpec::stub(336, 14, 4).unwrap();
        for (n, nt, m, sampled) in [(50, 6, 3456, 2880), (16, 4, 2304, 1728), (2, 2, 3 * 576, 1152)] {
            let cfg = CompressionConfig::thumbnail_and_sampling(n, nt, 1, m).validate().unwrap();
            let pack = thumbnail_and_sampling(&frames(n, 40), &cfg, &tower).unwrap();
            assert_eq!(pack.sampled_count(), sampled);
            assert_eq!(pack.thumbnail_count(), 576);
            assert_eq!(pack.total_count(), m);
            let prov = pack.sampled().provenance().unwrap();
            assert!(prov.windows(2).all(|w| w[0].frame_index <= w[1].frame_index));
        }
    }

    #[test]
    fn two_frames_sample_everything() {
        let tower = VisionTowerSpec::stub(336, 14, 4).unwrap();
        let fs = frames(2, 336);
        let cfg = CompressionConfig::thumbnail_and_sampling(2, 2, 1, 3 * 576).validate().unwrap();
        let pack = thumbnail_and_sampling(&fs, &cfg, &tower).unwrap();
        let all = concat_tokens(&encode_frames(&fs, &tower).unwrap()).unwrap();
        assert_eq!(pack.sampled(), &all);
    }

    #[test]
    fn multiple_thumbnails_partition_consecutively() {
        let tower = VisionTowerSpec::stub(28, 14, 3).unwrap();
        let fs: Vec<Frame> = (0..8).map(|i| Frame::solid(28, 28, [i * 30, 0, 0], i as u32).unwrap()).collect();
        let c = CompressionConfig::with_geometry(28, 14, 8, 2, 2, 2 * 4 + 5).validate().unwrap();
        let pack = thumbnail_and_sampling(&fs, &c, &tower).unwrap();
        assert_eq!(pack.thumbnails().len(), 2);
        // equidistant 4 of 8: frames 1, 3 | 5, 7 -> left/right halves of each thumbnail
        let red = |t: &TokenTensor, i: usize| t.token(i)[0];
        assert_eq!(red(&pack.thumbnails()[0], 0), (30.0f64 / 255.0) as f32);
        assert_eq!(red(&pack.thumbnails()[0], 1), (90.0f64 / 255.0) as f32);
        assert_eq!(red(&pack.thumbnails()[1], 0), (150.0f64 / 255.0) as f32);
        assert_eq!(red(&pack.thumbnails()[1], 3), (210.0f64 / 255.0) as f32);
        assert_eq!(pack.thumbnails()[1].provenance().unwrap()[0].frame_index, 1);
    }

    #[test]
    fn run_dispatches_and_checks_inputs() {
        let tower = VisionTowerSpec::stub(28, 14, 2).unwrap();
        let fs = frames(4, 28);
        let mut c = CompressionConfig::with_geometry(28, 14, 4, 2, 1, 8);
        for (strategy, total) in [
            (StrategySpec::Concat, 16),
            (StrategySpec::Sample { target: 5 }, 5),
            (StrategySpec::Pool { mode: PoolMode::Avg, kind: PoolKind::Spatial2d, kernel: 2, stride: 2 }, 4),
            (StrategySpec::Grid, 4),
            (StrategySpec::Grids { frames_per_grid: 2 }, 8),
        ] {
            c.strategy = strategy;
            let v = c.clone().validate().unwrap();
            let pack = run(Input::Frames(&fs), &v, &tower).unwrap();
            assert_eq!(pack.total_count(), total, "{strategy:?}");
        }

        let feats = encode_frames(&fs, &tower).unwrap();
        c.strategy = StrategySpec::Concat;
        let v = c.clone().validate().unwrap();
        let from_feats = run(Input::Features(&feats), &v, &tower).unwrap();
        assert_eq!(from_feats, run(Input::Frames(&fs), &v, &tower).unwrap());
        assert_eq!(run(Input::Features(&feats[..3]), &v, &tower).unwrap_err().name(), "FrameCountMismatch");

        c.strategy = StrategySpec::Grid;
        let v = c.validate().unwrap();
        assert_eq!(run(Input::Features(&feats), &v, &tower).unwrap_err().name(), "RequiresFrames");

        let other = VisionTowerSpec::stub(56, 14, 2).unwrap();
        assert_eq!(run(Input::Frames(&fs), &v, &other).unwrap_err().name(), "ShapeMismatch");
    }
}
