//! Visual-token compression for video inputs to image LLMs.
//!
//! Frames go in, a fixed-budget [`TokenPack`] comes out. The main strategy,
//! [`compress::thumbnail_and_sampling`], pairs a grid-view thumbnail of a
//! few equidistant frames with tokens uniformly sampled from every frame.
//! Concat, pooling, grid, grids and plain sampling are provided for
//! comparison. Every transform is deterministic and bit-reproducible.

pub mod budget;
pub mod cli;
pub mod compress;
pub mod error;
pub mod grid;
pub mod model;
pub mod pack;
pub mod sampler;
pub mod tower;

pub use error::{Error, Result};
pub use grid::ThumbnailLayout;
pub use model::{
    CompressionConfig, Frame, Ordering, PackMeta, PoolKind, PoolMode, Provenance, StrategyKind, StrategySpec,
    TokenBudget, TokenPack, TokenTensor, ValidatedConfig,
};
pub use tower::{TowerKind, VisionTowerSpec};
