//! Stand-in for the image LLM's vision encoder and projection.
//!
//! The stub maps every `patch x patch` block of a square frame to one token
//! whose values are the block's channel means. Token counts and patch
//! geometry match CLIP-L/14 at 336 px; values are only meant to carry
//! enough signal that layout bugs show up downstream. Real features can be
//! supplied as a pre-extracted feature file instead.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{tokens_per_image, Frame, Provenance, TokenTensor};
use crate::pack;

pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TowerKind {
    Stub,
    FeatureFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisionTowerSpec {
    resolution: u32,
    patch_size: u32,
    dim: usize,
    kind: TowerKind,
}

impl VisionTowerSpec {
    pub fn new(resolution: u32, patch_size: u32, dim: usize, kind: TowerKind) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::ZeroPatchSize);
        }
        if tokens_per_image(resolution, patch_size).is_none() {
            return Err(Error::ResolutionNotDivisible { resolution, patch_size });
        }
        Ok(Self { resolution, patch_size, dim, kind })
    }

    pub fn stub(resolution: u32, patch_size: u32, dim: usize) -> Result<Self> {
        Self::new(resolution, patch_size, dim, TowerKind::Stub)
    }

    pub fn feature_file(resolution: u32, patch_size: u32, dim: usize, path: impl Into<PathBuf>) -> Result<Self> {
        Self::new(resolution, patch_size, dim, TowerKind::FeatureFile(path.into()))
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &TowerKind {
        &self.kind
    }

    /// Patches per side.
    pub fn grid_side(&self) -> u32 {
        self.resolution / self.patch_size
    }

    /// `V`, tokens per image.
    pub fn tokens_per_image(&self) -> usize {
        let s = self.grid_side() as usize;
        s * s
    }

    /// Encodes a `resolution x resolution` frame into `V` tokens of `dim`
    /// values, row-major over the patch grid.
    ///
    /// Token `p`, component `d` is the mean of channel `d % 3` over patch
    /// `p`, scaled to `[0, 1]` and weighted by `1 / (1 + d)`.
    pub fn encode(&self, frame: &Frame) -> Result<TokenTensor> {
        if self.kind != TowerKind::Stub {
            return Err(Error::UnsupportedTower);
        }
        if frame.width() != self.resolution || frame.height() != self.resolution {
            return Err(Error::WrongResolution {
                width: frame.width(),
                height: frame.height(),
                resolution: self.resolution,
            });
        }
        let side = self.grid_side() as usize;
        let patch = self.patch_size as usize;
        let res = self.resolution as usize;
        let px = frame.pixels();

        // per-patch channel sums, exact in integers
        let mut sums = vec![[0u64; 3]; side * side];
        for y in 0..res {
            let row = &px[y * res * 3..(y + 1) * res * 3];
            let pr = y / patch;
            for (x, rgb) in row.chunks_exact(3).enumerate() {
                let s = &mut sums[pr * side + x / patch];
                s[0] += rgb[0] as u64;
                s[1] += rgb[1] as u64;
                s[2] += rgb[2] as u64;
            }
        }

        let weights: Vec<f32> = (0..self.dim).map(|d| 1.0 / (1.0 + d as f32)).collect();
        let denom = (patch * patch * 255) as f64;
        let mut values = Vec::with_capacity(side * side * self.dim);
        let mut provenance = Vec::with_capacity(side * side);
        for (p, s) in sums.iter().enumerate() {
            let means = s.map(|v| (v as f64 / denom) as f32);
            values.extend(weights.iter().enumerate().map(|(d, w)| means[d % 3] * w));
            provenance.push(Provenance::new(frame.source_index(), (p / side) as u32, (p % side) as u32));
        }
        TokenTensor::new(side * side, self.dim, values, Some(provenance))
    }

    /// Reads `frame_count` per-frame tensors from the configured feature
    /// file.
    pub fn load_features(&self, frame_count: usize) -> Result<Vec<TokenTensor>> {
        let TowerKind::FeatureFile(path) = &self.kind else {
            return Err(Error::UnsupportedTower);
        };
        let tensors = read_feature_file(path)?;
        self.check_features(&tensors, frame_count)?;
        Ok(tensors)
    }

    pub(crate) fn check_features(&self, tensors: &[TokenTensor], frame_count: usize) -> Result<()> {
        if tensors.len() != frame_count {
            return Err(Error::ShapeMismatch(format!(
                "feature file holds {} frames, expected {frame_count}",
                tensors.len()
            )));
        }
        for t in tensors {
            if t.num_tokens() != self.tokens_per_image() || t.dim() != self.dim {
                return Err(Error::ShapeMismatch(format!(
                    "feature tensor is {}x{}, tower expects {}x{}",
                    t.num_tokens(),
                    t.dim(),
                    self.tokens_per_image(),
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

pub fn read_feature_file(path: &Path) -> Result<Vec<TokenTensor>> {
    let file = File::open(path)?;
    pack::read_features(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_frame_encodes_to_zeros() {
        let tower = VisionTowerSpec::stub(336, 14, 64).unwrap();
        let t = tower.encode(&Frame::solid(336, 336, [0, 0, 0], 0).unwrap()).unwrap();
        assert_eq!(t.num_tokens(), 576);
        assert_eq!(t.dim(), 64);
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_frame_encodes_to_weights() {
        let tower = VisionTowerSpec::stub(336, 14, 3).unwrap();
        let t = tower.encode(&Frame::solid(336, 336, [255, 255, 255], 0).unwrap()).unwrap();
        for row in t.rows() {
            assert_eq!(row, &[1.0, 0.5, 1.0 / 3.0]);
        }
    }

    #[test]
    fn patch_means_follow_channels() {
        // 4x4 frame, patch 2: top-left patch red, rest black
        let mut px = vec![0u8; 4 * 4 * 3];
        for (x, y) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            px[(y * 4 + x) * 3] = 255;
        }
        px[(3 * 4 + 3) * 3 + 1] = 102; // one green pixel in the last patch
        let f = Frame::new(4, 4, px, 9).unwrap();
        let tower = VisionTowerSpec::stub(4, 2, 4).unwrap();
        let t = tower.encode(&f).unwrap();
        assert_eq!(t.num_tokens(), 4);
        assert_eq!(t.token(0), &[1.0, 0.0, 0.0, 0.25]);
        assert_eq!(t.token(1), &[0.0; 4]);
        assert_eq!(t.token(3), &[0.0, 0.1 * 0.5, 0.0, 0.0]);
        let prov = t.provenance().unwrap();
        assert_eq!(prov[1], Provenance::new(9, 0, 1));
        assert_eq!(prov[2], Provenance::new(9, 1, 0));
    }

    #[test]
    fn provenance_covers_grid_once() {
        let tower = VisionTowerSpec::stub(336, 14, 2).unwrap();
        let t = tower.encode(&Frame::solid(336, 336, [1, 2, 3], 4).unwrap()).unwrap();
        let prov = t.provenance().unwrap();
        for (i, p) in prov.iter().enumerate() {
            assert_eq!(*p, Provenance::new(4, (i / 24) as u32, (i % 24) as u32));
        }
    }

    #[test]
    fn wrong_resolution_rejected() {
        let tower = VisionTowerSpec::stub(336, 14, 2).unwrap();
        let err = tower.encode(&Frame::solid(335, 336, [0; 3], 0).unwrap()).unwrap_err();
        assert_eq!(err.name(), "WrongResolution");
    }

    #[test]
    fn bad_geometry_rejected() {
        assert_eq!(VisionTowerSpec::stub(336, 15, 2).unwrap_err().name(), "ResolutionNotDivisible");
        assert_eq!(VisionTowerSpec::stub(336, 0, 2).unwrap_err().name(), "ZeroPatchSize");
    }

    #[test]
    fn feature_tower_cannot_encode() {
        let tower = VisionTowerSpec::feature_file(28, 14, 2, "/nonexistent").unwrap();
        let err = tower.encode(&Frame::solid(28, 28, [0; 3], 0).unwrap()).unwrap_err();
        assert_eq!(err.name(), "UnsupportedTower");
        assert_eq!(tower.load_features(1).unwrap_err().name(), "IoError");
    }

    #[test]
    fn stub_values_in_unit_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let px = (0..56 * 56 * 3).map(|_| rng.gen()).collect();
        let f = Frame::new(56, 56, px, 0).unwrap();
        let t = VisionTowerSpec::stub(56, 14, 16).unwrap().encode(&f).unwrap();
        assert!(t.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(t, VisionTowerSpec::stub(56, 14, 16).unwrap().encode(&f).unwrap());
    }
}
