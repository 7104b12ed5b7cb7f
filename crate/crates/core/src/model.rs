//! Value types shared by every stage of the pipeline.
//!
//! All types are immutable once built: constructors check their invariants
//! and expose read-only accessors, so they can be shared freely across
//! threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{default_layout, ThumbnailLayout};

/// An 8-bit RGB raster, row-major with interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    source_index: u32,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, source_index: u32) -> Result<Self> {
        let expected = (width as usize).checked_mul(height as usize).and_then(|n| n.checked_mul(3));
        match expected {
            Some(expected) if width > 0 && height > 0 && pixels.len() == expected => {
                Ok(Self { width, height, pixels, source_index })
            }
            _ => Err(Error::BadFrameBuffer {
                width,
                height,
                expected: expected.unwrap_or(usize::MAX),
                actual: pixels.len(),
            }),
        }
    }

    /// A frame where every pixel has the same color.
    pub fn solid(width: u32, height: u32, rgb: [u8; 3], source_index: u32) -> Result<Self> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels, source_index)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn source_index(&self) -> u32 {
        self.source_index
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn with_source_index(mut self, source_index: u32) -> Self {
        self.source_index = source_index;
        self
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("source_index", &self.source_index)
            .finish_non_exhaustive()
    }
}

/// Where a token came from: the frame (or composed image) ordinal and the
/// patch position inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub frame_index: u32,
    pub patch_row: u32,
    pub patch_col: u32,
}

impl Provenance {
    pub fn new(frame_index: u32, patch_row: u32, patch_col: u32) -> Self {
        Self { frame_index, patch_row, patch_col }
    }
}

/// A `num_tokens x dim` row-major matrix of visual tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTensor {
    num_tokens: usize,
    dim: usize,
    values: Vec<f32>,
    provenance: Option<Vec<Provenance>>,
}

impl TokenTensor {
    pub fn new(num_tokens: usize, dim: usize, values: Vec<f32>, provenance: Option<Vec<Provenance>>) -> Result<Self> {
        let expected =
            num_tokens.checked_mul(dim).ok_or(Error::BadTensorBuffer { expected: usize::MAX, actual: values.len() })?;
        if values.len() != expected {
            return Err(Error::BadTensorBuffer { expected, actual: values.len() });
        }
        if let Some(p) = &provenance {
            if p.len() != num_tokens {
                return Err(Error::ShapeMismatch(format!("{} provenance entries for {} tokens", p.len(), num_tokens)));
            }
        }
        Ok(Self { num_tokens, dim, values, provenance })
    }

    pub fn empty(dim: usize) -> Self {
        Self { num_tokens: 0, dim, values: Vec::new(), provenance: Some(Vec::new()) }
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Contiguous row-major values.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn provenance(&self) -> Option<&[Provenance]> {
        self.provenance.as_deref()
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.num_tokens).map(move |i| self.token(i))
    }

    pub fn without_provenance(mut self) -> Self {
        self.provenance = None;
        self
    }

    pub fn into_parts(self) -> (usize, usize, Vec<f32>, Option<Vec<Provenance>>) {
        (self.num_tokens, self.dim, self.values, self.provenance)
    }
}

/// Position of the thumbnail tokens relative to the sampled tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// `[sampled, thumbnails]`
    #[default]
    SamplingFirst,
    /// `[thumbnails, sampled]`
    ThumbnailFirst,
}

impl FromStr for Ordering {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "sampling_first" => Ok(Ordering::SamplingFirst),
            "thumbnail_first" => Ok(Ordering::ThumbnailFirst),
            other => Err(format!("unknown ordering `{other}`")),
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::SamplingFirst => "sampling_first",
            Ordering::ThumbnailFirst => "thumbnail_first",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PoolMode {
    #[default]
    Avg,
    Max,
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "avg" | "average" | "mean" => Ok(PoolMode::Avg),
            "max" => Ok(PoolMode::Max),
            other => Err(format!("unknown pool mode `{other}`")),
        }
    }
}

/// Whether pooling runs over the token sequence or the patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PoolKind {
    Seq1d,
    #[default]
    Spatial2d,
}

impl FromStr for PoolKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "seq1d" | "1d" => Ok(PoolKind::Seq1d),
            "spatial2d" | "2d" => Ok(PoolKind::Spatial2d),
            other => Err(format!("unknown pool kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategySpec {
    Concat,
    Pool { mode: PoolMode, kind: PoolKind, kernel: usize, stride: usize },
    Grid,
    Grids { frames_per_grid: usize },
    Sample { target: usize },
    ThumbnailAndSampling { n_thumb: usize, n_thumbnails: usize, budget: usize },
}

impl StrategySpec {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategySpec::Concat => StrategyKind::Concat,
            StrategySpec::Pool { .. } => StrategyKind::Pool,
            StrategySpec::Grid => StrategyKind::Grid,
            StrategySpec::Grids { .. } => StrategyKind::Grids,
            StrategySpec::Sample { .. } => StrategyKind::Sample,
            StrategySpec::ThumbnailAndSampling { .. } => StrategyKind::ThumbnailAndSampling,
        }
    }
}

/// Strategy tag without parameters, as recorded in pack headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Concat,
    Pool,
    Grid,
    Grids,
    Sample,
    ThumbnailAndSampling,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Concat => "concat",
            StrategyKind::Pool => "pool",
            StrategyKind::Grid => "grid",
            StrategyKind::Grids => "grids",
            StrategyKind::Sample => "sample",
            StrategyKind::ThumbnailAndSampling => "thumbnail_and_sampling",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "concat" => Ok(StrategyKind::Concat),
            "pool" | "pooling" => Ok(StrategyKind::Pool),
            "grid" => Ok(StrategyKind::Grid),
            "grids" => Ok(StrategyKind::Grids),
            "sample" | "sampling" => Ok(StrategyKind::Sample),
            "ts" | "thumbnail_and_sampling" | "thumbnail-and-sampling" => Ok(StrategyKind::ThumbnailAndSampling),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every knob of the compression pipeline in one record.
///
/// Build it freely, then call [`CompressionConfig::validate`]; the pipeline
/// only accepts the resulting [`ValidatedConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionConfig {
    /// Frames sampled from the video.
    pub n_frames: usize,
    /// Frames composed into each thumbnail image; must be even.
    pub n_thumb_frames: usize,
    /// Number of thumbnail images.
    pub n_thumbnails: usize,
    /// Total visual tokens handed to the LLM.
    pub token_budget: usize,
    /// Tokens the vision tower emits per image; `(resolution / patch)^2`.
    pub tokens_per_image: usize,
    pub encoder_resolution: u32,
    pub patch_size: u32,
    pub thumb_layout: ThumbnailLayout,
    pub ordering: Ordering,
    pub strategy: StrategySpec,
}

impl Default for CompressionConfig {
    /// 50 frames, one 6-frame thumbnail, 3456 tokens, CLIP-L/14 at 336 px.
    fn default() -> Self {
        Self::thumbnail_and_sampling(50, 6, 1, 3456)
    }
}

impl CompressionConfig {
    /// A thumbnail-and-sampling config at 336 px / patch 14 with the
    /// default two-column layout.
    pub fn thumbnail_and_sampling(
        n_frames: usize,
        n_thumb_frames: usize,
        n_thumbnails: usize,
        token_budget: usize,
    ) -> Self {
        Self::with_geometry(336, 14, n_frames, n_thumb_frames, n_thumbnails, token_budget)
    }

    pub fn with_geometry(
        encoder_resolution: u32,
        patch_size: u32,
        n_frames: usize,
        n_thumb_frames: usize,
        n_thumbnails: usize,
        token_budget: usize,
    ) -> Self {
        let thumb_layout = default_layout(n_thumb_frames).unwrap_or(ThumbnailLayout { cols: 2, rows: 1 });
        Self {
            n_frames,
            n_thumb_frames,
            n_thumbnails,
            token_budget,
            tokens_per_image: tokens_per_image(encoder_resolution, patch_size).unwrap_or(0),
            encoder_resolution,
            patch_size,
            thumb_layout,
            ordering: Ordering::SamplingFirst,
            strategy: StrategySpec::ThumbnailAndSampling {
                n_thumb: n_thumb_frames,
                n_thumbnails,
                budget: token_budget,
            },
        }
    }

    /// Re-derives `tokens_per_image` and the thumbnail-and-sampling strategy
    /// parameters from the other fields.
    pub fn resynced(mut self) -> Self {
        if let Some(v) = tokens_per_image(self.encoder_resolution, self.patch_size) {
            self.tokens_per_image = v;
        }
        if let StrategySpec::ThumbnailAndSampling { .. } = self.strategy {
            self.strategy = StrategySpec::ThumbnailAndSampling {
                n_thumb: self.n_thumb_frames,
                n_thumbnails: self.n_thumbnails,
                budget: self.token_budget,
            };
        }
        self
    }

    /// Checks every invariant, reporting the first one violated.
    ///
    /// Geometry is always checked. Thumbnail and budget constraints apply
    /// to the strategies that use them.
    pub fn validate(self) -> Result<ValidatedConfig> {
        if self.n_frames == 0 {
            return Err(Error::ZeroFrames);
        }
        if self.patch_size == 0 {
            return Err(Error::ZeroPatchSize);
        }
        let expected_v =
            tokens_per_image(self.encoder_resolution, self.patch_size).ok_or(Error::ResolutionNotDivisible {
                resolution: self.encoder_resolution,
                patch_size: self.patch_size,
            })?;
        if self.tokens_per_image != expected_v {
            return Err(Error::TokensPerImageMismatch { expected: expected_v, actual: self.tokens_per_image });
        }
        let available = self.n_frames.saturating_mul(self.tokens_per_image);
        match self.strategy {
            StrategySpec::Concat => {}
            StrategySpec::Pool { kernel, stride, .. } => {
                if kernel == 0 || stride == 0 {
                    return Err(Error::InvalidPoolWindow { kernel, stride });
                }
            }
            StrategySpec::Sample { target } => {
                if target == 0 || target > available {
                    return Err(Error::InvalidSelection { total: available, select: target });
                }
            }
            StrategySpec::Grids { frames_per_grid } => {
                if frames_per_grid == 0 || !self.n_frames.is_multiple_of(frames_per_grid) {
                    return Err(Error::NotDivisible { frames: self.n_frames, group: frames_per_grid });
                }
                self.check_layout(frames_per_grid)?;
            }
            StrategySpec::Grid => {
                self.check_thumb_frames(1)?;
                self.check_layout(self.n_thumb_frames)?;
            }
            StrategySpec::ThumbnailAndSampling { n_thumb, n_thumbnails, budget } => {
                self.check_thumb_frames(self.n_thumbnails)?;
                let thumbnail_tokens = self.n_thumbnails.saturating_mul(self.tokens_per_image);
                if self.token_budget <= thumbnail_tokens {
                    return Err(Error::BudgetTooSmall { budget: self.token_budget, thumbnail_tokens });
                }
                let requested = self.token_budget - thumbnail_tokens;
                if requested > available {
                    return Err(Error::BudgetExceedsAvailable { requested, available });
                }
                self.check_layout(self.n_thumb_frames)?;
                if n_thumb != self.n_thumb_frames {
                    return Err(Error::StrategyMismatch("n_thumb != n_thumb_frames"));
                }
                if n_thumbnails != self.n_thumbnails {
                    return Err(Error::StrategyMismatch("n_thumbnails differs"));
                }
                if budget != self.token_budget {
                    return Err(Error::StrategyMismatch("budget != token_budget"));
                }
            }
        }
        Ok(ValidatedConfig(self))
    }

    fn check_thumb_frames(&self, n_thumbnails: usize) -> Result<()> {
        if self.n_thumb_frames == 0 {
            return Err(Error::ZeroThumbFrames);
        }
        if !self.n_thumb_frames.is_multiple_of(2) {
            return Err(Error::OddThumbFrames(self.n_thumb_frames));
        }
        if n_thumbnails == 0 {
            return Err(Error::ZeroThumbnails);
        }
        let needed = self.n_thumb_frames.saturating_mul(n_thumbnails);
        if needed > self.n_frames {
            return Err(Error::ThumbFramesExceedFrames { needed, available: self.n_frames });
        }
        Ok(())
    }

    fn check_layout(&self, frames: usize) -> Result<()> {
        let ThumbnailLayout { cols, rows } = self.thumb_layout;
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidLayout { cols, rows });
        }
        if cols > self.encoder_resolution || rows > self.encoder_resolution {
            return Err(Error::CanvasTooSmall { target: self.encoder_resolution, cols, rows });
        }
        if (cols as usize).saturating_mul(rows as usize) < frames {
            return Err(Error::LayoutTooSmall { cols, rows, frames });
        }
        Ok(())
    }
}

/// `(resolution / patch)^2`, or `None` when the geometry does not tile.
pub fn tokens_per_image(resolution: u32, patch_size: u32) -> Option<usize> {
    if patch_size == 0 || resolution == 0 || !resolution.is_multiple_of(patch_size) {
        return None;
    }
    let side = (resolution / patch_size) as usize;
    side.checked_mul(side)
}

/// A [`CompressionConfig`] whose invariants have been checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedConfig(CompressionConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> CompressionConfig {
        self.0
    }

    /// Tokens taken by the thumbnail pathway, `k * V`.
    pub fn thumbnail_tokens(&self) -> usize {
        self.0.n_thumbnails * self.0.tokens_per_image
    }

    /// Tokens drawn by uniform sampling, `M - k * V`.
    pub fn sampled_tokens(&self) -> usize {
        self.0.token_budget - self.thumbnail_tokens()
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = CompressionConfig;

    fn deref(&self) -> &CompressionConfig {
        &self.0
    }
}

/// Token allocation between the two pathways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenBudget {
    pub thumbnail_tokens: usize,
    pub sampled_tokens: usize,
    pub total: usize,
    /// All frame tokens over the sampled tokens, `N * V / (M - k * V)`.
    pub sampling_compression_rate: f64,
}

/// Pack-level description written into the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackMeta {
    pub strategy: StrategyKind,
    pub n_frames: usize,
    pub n_thumb_frames: usize,
    pub n_thumbnails: usize,
    pub tokens_per_image: usize,
    pub source_label: String,
}

/// Final artifact: sampled tokens plus one tensor per thumbnail image.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPack {
    sampled: TokenTensor,
    thumbnails: Vec<TokenTensor>,
    ordering: Ordering,
    meta: PackMeta,
}

impl TokenPack {
    pub fn new(sampled: TokenTensor, thumbnails: Vec<TokenTensor>, ordering: Ordering, meta: PackMeta) -> Result<Self> {
        if thumbnails.len() != meta.n_thumbnails {
            return Err(Error::ShapeMismatch(format!(
                "{} thumbnail tensors but n_thumbnails = {}",
                thumbnails.len(),
                meta.n_thumbnails
            )));
        }
        for t in &thumbnails {
            if t.dim() != sampled.dim() {
                return Err(Error::DimMismatch { expected: sampled.dim(), actual: t.dim() });
            }
        }
        Ok(Self { sampled, thumbnails, ordering, meta })
    }

    pub fn sampled(&self) -> &TokenTensor {
        &self.sampled
    }

    pub fn thumbnails(&self) -> &[TokenTensor] {
        &self.thumbnails
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn meta(&self) -> &PackMeta {
        &self.meta
    }

    pub fn with_source_label(mut self, label: impl Into<String>) -> Self {
        self.meta.source_label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.sampled.dim()
    }

    pub fn sampled_count(&self) -> usize {
        self.sampled.num_tokens()
    }

    pub fn thumbnail_count(&self) -> usize {
        self.thumbnails.iter().map(TokenTensor::num_tokens).sum()
    }

    pub fn total_count(&self) -> usize {
        self.sampled_count() + self.thumbnail_count()
    }

    /// Tensors in the order they are handed to the LLM.
    pub fn tensors_in_order(&self) -> Vec<&TokenTensor> {
        let thumbs = self.thumbnails.iter();
        match self.ordering {
            Ordering::SamplingFirst => std::iter::once(&self.sampled).chain(thumbs).collect(),
            Ordering::ThumbnailFirst => thumbs.chain(std::iter::once(&self.sampled)).collect(),
        }
    }

    /// Whether every tensor carries provenance.
    pub fn has_provenance(&self) -> bool {
        self.sampled.provenance().is_some() && self.thumbnails.iter().all(|t| t.provenance().is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, nt: usize, k: usize, m: usize) -> CompressionConfig {
        CompressionConfig::thumbnail_and_sampling(n, nt, k, m)
    }

    #[test]
    fn default_config_is_valid() {
        let c = CompressionConfig::default().validate().unwrap();
        assert_eq!(c.tokens_per_image, 576);
        assert_eq!(c.thumbnail_tokens(), 576);
        assert_eq!(c.sampled_tokens(), 2880);
        assert_eq!(c.thumb_layout, ThumbnailLayout { cols: 2, rows: 3 });
    }

    #[test]
    fn thumb_frames_equal_to_frames_is_valid() {
        cfg(16, 16, 1, 2 * 576).validate().unwrap();
    }

    #[test]
    fn odd_thumb_frames_rejected() {
        let mut c = cfg(50, 6, 1, 3456);
        c.n_thumb_frames = 5;
        let c = c.resynced();
        assert!(matches!(c.validate(), Err(Error::OddThumbFrames(5))));
    }

    #[test]
    fn budget_equal_to_thumbnail_tokens_rejected() {
        let err = cfg(50, 6, 1, 576).validate().unwrap_err();
        assert_eq!(err.name(), "BudgetTooSmall");
        let err = cfg(50, 6, 2, 1152).validate().unwrap_err();
        assert_eq!(err.name(), "BudgetTooSmall");
    }

    #[test]
    fn layout_must_hold_thumb_frames() {
        let mut c = cfg(50, 6, 1, 3456);
        c.thumb_layout = ThumbnailLayout { cols: 2, rows: 2 };
        assert_eq!(c.validate().unwrap_err().name(), "LayoutTooSmall");
    }

    #[test]
    fn geometry_errors() {
        let mut c = cfg(50, 6, 1, 3456);
        c.encoder_resolution = 330;
        assert_eq!(c.clone().validate().unwrap_err().name(), "ResolutionNotDivisible");
        c.patch_size = 0;
        assert_eq!(c.validate().unwrap_err().name(), "ZeroPatchSize");

        let mut c = cfg(50, 6, 1, 3456);
        c.tokens_per_image = 100;
        assert_eq!(c.validate().unwrap_err().name(), "TokensPerImageMismatch");
    }

    #[test]
    fn thumbnails_need_enough_frames() {
        assert_eq!(cfg(4, 6, 1, 1000).validate().unwrap_err().name(), "ThumbFramesExceedFrames");
        assert_eq!(cfg(10, 6, 2, 3456).validate().unwrap_err().name(), "ThumbFramesExceedFrames");
    }

    #[test]
    fn budget_cannot_exceed_frame_tokens() {
        // 2 frames give 1152 tokens; 1152 + 576 is the most the budget can hold
        cfg(2, 2, 1, 3 * 576).validate().unwrap();
        assert_eq!(cfg(2, 2, 1, 3 * 576 + 1).validate().unwrap_err().name(), "BudgetExceedsAvailable");
    }

    #[test]
    fn strategy_must_match_config() {
        let mut c = cfg(50, 6, 1, 3456);
        c.token_budget = 3000;
        assert_eq!(c.validate().unwrap_err().name(), "StrategyMismatch");

        let mut c = cfg(50, 6, 1, 3456);
        c.strategy = StrategySpec::Pool { mode: PoolMode::Avg, kind: PoolKind::Seq1d, kernel: 0, stride: 2 };
        assert_eq!(c.validate().unwrap_err().name(), "InvalidPoolWindow");
    }

    #[test]
    fn non_thumbnail_strategies_skip_budget_checks() {
        let mut c = cfg(4, 6, 1, 3456);
        c.strategy = StrategySpec::Concat;
        c.clone().validate().unwrap();
        c.strategy = StrategySpec::Sample { target: 2304 };
        c.clone().validate().unwrap();
        c.strategy = StrategySpec::Sample { target: 2305 };
        assert_eq!(c.clone().validate().unwrap_err().name(), "InvalidSelection");
        c.strategy = StrategySpec::Grids { frames_per_grid: 3 };
        assert_eq!(c.clone().validate().unwrap_err().name(), "NotDivisible");
        c.strategy = StrategySpec::Grids { frames_per_grid: 4 };
        c.thumb_layout = ThumbnailLayout { cols: 2, rows: 2 };
        c.clone().validate().unwrap();
        c.strategy = StrategySpec::Grid;
        assert_eq!(c.clone().validate().unwrap_err().name(), "ThumbFramesExceedFrames");
        c.n_thumb_frames = 4;
        c.validate().unwrap();
    }

    #[test]
    fn zero_counts_rejected() {
        assert_eq!(cfg(0, 6, 1, 3456).validate().unwrap_err().name(), "ZeroFrames");
        assert_eq!(cfg(50, 0, 1, 3456).validate().unwrap_err().name(), "ZeroThumbFrames");
        assert_eq!(cfg(50, 6, 0, 3456).validate().unwrap_err().name(), "ZeroThumbnails");
    }

    #[test]
    fn frame_buffer_checked() {
        assert!(Frame::new(2, 2, vec![0; 12], 0).is_ok());
        assert_eq!(Frame::new(2, 2, vec![0; 11], 0).unwrap_err().name(), "BadFrameBuffer");
        assert_eq!(Frame::new(0, 2, vec![], 0).unwrap_err().name(), "BadFrameBuffer");
    }

    #[test]
    fn tensor_buffer_checked() {
        assert!(TokenTensor::new(3, 2, vec![0.0; 6], None).is_ok());
        assert_eq!(TokenTensor::new(3, 2, vec![0.0; 5], None).unwrap_err().name(), "BadTensorBuffer");
        let prov = Some(vec![Provenance::new(0, 0, 0)]);
        assert_eq!(TokenTensor::new(3, 2, vec![0.0; 6], prov).unwrap_err().name(), "ShapeMismatch");
    }

    #[test]
    fn tokens_per_image_geometry() {
        assert_eq!(tokens_per_image(336, 14), Some(576));
        assert_eq!(tokens_per_image(336, 15), None);
        assert_eq!(tokens_per_image(0, 14), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // validation never panics and is deterministic
            #[test]
            fn validation_is_total(
                n in 0usize..200, nt in 0usize..20, k in 0usize..5, m in 0usize..20_000,
                res in 0u32..700, patch in 0u32..40, v in 0usize..3000,
                cols in 0u32..5, rows in 0u32..12,
            ) {
                let mut c = CompressionConfig::thumbnail_and_sampling(n, nt, k, m);
                c.encoder_resolution = res;
                c.patch_size = patch;
                c.tokens_per_image = v;
                c.thumb_layout = ThumbnailLayout { cols, rows };
                let a = c.clone().validate().map_err(|e| e.name());
                let b = c.validate().map_err(|e| e.name());
                prop_assert_eq!(a, b);
            }
        }
    }
}
