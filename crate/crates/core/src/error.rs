use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. Variant names are stable and are
/// what the CLI prints, so downstream tooling can match on them.
#[derive(Debug, Error)]
pub enum Error {
    // configuration
    #[error("n_frames must be at least 1")]
    ZeroFrames,
    #[error("patch_size must be at least 1")]
    ZeroPatchSize,
    #[error("encoder resolution {resolution} is not divisible by patch size {patch_size}")]
    ResolutionNotDivisible { resolution: u32, patch_size: u32 },
    #[error("tokens_per_image is {actual}, expected (resolution / patch)^2 = {expected}")]
    TokensPerImageMismatch { expected: usize, actual: usize },
    #[error("n_thumb_frames must be at least 2")]
    ZeroThumbFrames,
    #[error("n_thumb_frames = {0} is odd")]
    OddThumbFrames(usize),
    #[error("n_thumbnails must be at least 1")]
    ZeroThumbnails,
    #[error("thumbnails need {needed} frames but only {available} are sampled")]
    ThumbFramesExceedFrames { needed: usize, available: usize },
    #[error("token budget {budget} leaves no sampled tokens after {thumbnail_tokens} thumbnail tokens")]
    BudgetTooSmall { budget: usize, thumbnail_tokens: usize },
    #[error("budget asks for {requested} sampled tokens but the frames only yield {available}")]
    BudgetExceedsAvailable { requested: usize, available: usize },
    #[error("layout {cols}x{rows} cannot hold {frames} frames")]
    LayoutTooSmall { cols: u32, rows: u32, frames: usize },
    #[error("invalid layout {cols}x{rows}")]
    InvalidLayout { cols: u32, rows: u32 },
    #[error("pooling kernel and stride must be at least 1 (kernel={kernel}, stride={stride})")]
    InvalidPoolWindow { kernel: usize, stride: usize },
    #[error("strategy parameters disagree with the config: {0}")]
    StrategyMismatch(&'static str),

    // frames and tensors
    #[error("frame {width}x{height} has {actual} bytes, expected {expected}")]
    BadFrameBuffer { width: u32, height: u32, expected: usize, actual: usize },
    #[error("tensor has {actual} values, expected {expected}")]
    BadTensorBuffer { expected: usize, actual: usize },
    #[error("cannot select {select} of {total} items")]
    InvalidSelection { total: usize, select: usize },
    #[error("{frames} frames do not fit a {cols}x{rows} grid")]
    TooManyFrames { cols: u32, rows: u32, frames: usize },
    #[error("canvas {target} is smaller than the {cols}x{rows} grid")]
    CanvasTooSmall { target: u32, cols: u32, rows: u32 },
    #[error("frame is {width}x{height}, encoder expects {resolution}x{resolution}")]
    WrongResolution { width: u32, height: u32, resolution: u32 },
    #[error("tower backed by a feature file cannot encode pixels")]
    UnsupportedTower,
    #[error("strategy needs raw frames, got pre-extracted features")]
    RequiresFrames,
    #[error("expected {expected} frames, got {actual}")]
    FrameCountMismatch { expected: usize, actual: usize },
    #[error("token dims differ: {expected} vs {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("{0} tokens per frame is not a square patch grid")]
    NotSquareGrid(usize),
    #[error("{frames} frames cannot be split into groups of {group}")]
    NotDivisible { frames: usize, group: usize },
    #[error("no input tensors")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // pack container
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported pack version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed pack: {0}")]
    FormatError(String),
    #[error("io error: {0}")]
    IoError(#[from] io::Error),
    #[error("image decode error: {0}")]
    ImageError(String),
}

impl Error {
    /// The variant name, e.g. `"BadMagic"`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::ZeroFrames => "ZeroFrames",
            Error::ZeroPatchSize => "ZeroPatchSize",
            Error::ResolutionNotDivisible { .. } => "ResolutionNotDivisible",
            Error::TokensPerImageMismatch { .. } => "TokensPerImageMismatch",
            Error::ZeroThumbFrames => "ZeroThumbFrames",
            Error::OddThumbFrames(_) => "OddThumbFrames",
            Error::ZeroThumbnails => "ZeroThumbnails",
            Error::ThumbFramesExceedFrames { .. } => "ThumbFramesExceedFrames",
            Error::BudgetTooSmall { .. } => "BudgetTooSmall",
            Error::BudgetExceedsAvailable { .. } => "BudgetExceedsAvailable",
            Error::LayoutTooSmall { .. } => "LayoutTooSmall",
            Error::InvalidLayout { .. } => "InvalidLayout",
            Error::InvalidPoolWindow { .. } => "InvalidPoolWindow",
            Error::StrategyMismatch(_) => "StrategyMismatch",
            Error::BadFrameBuffer { .. } => "BadFrameBuffer",
            Error::BadTensorBuffer { .. } => "BadTensorBuffer",
            Error::InvalidSelection { .. } => "InvalidSelection",
            Error::TooManyFrames { .. } => "TooManyFrames",
            Error::CanvasTooSmall { .. } => "CanvasTooSmall",
            Error::WrongResolution { .. } => "WrongResolution",
            Error::UnsupportedTower => "UnsupportedTower",
            Error::RequiresFrames => "RequiresFrames",
            Error::FrameCountMismatch { .. } => "FrameCountMismatch",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::NotSquareGrid(_) => "NotSquareGrid",
            Error::NotDivisible { .. } => "NotDivisible",
            Error::EmptyInput => "EmptyInput",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::BadMagic(_) => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::FormatError(_) => "FormatError",
            Error::IoError(_) => "IoError",
            Error::ImageError(_) => "ImageError",
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::FormatError(msg.into())
    }
}
