//! Frame directories: lexicographically ordered PNG / PPM files.
//!
//! Videos must be decoded to images beforehand, e.g.
//! `ffmpeg -i clip.mp4 frames/%05d.png`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Frame, TokenTensor};
use crate::sampler::uniform_indices;

const EXTENSIONS: &[&str] = &["png", "ppm", "pnm", "pgm", "pbm"];

pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Indices of the frames to keep: all of them when there are at most
/// `max_frames`, otherwise `max_frames` uniformly spaced ones.
pub fn keep_indices(available: usize, max_frames: usize) -> Result<Vec<usize>> {
    if available == 0 {
        return Err(Error::EmptyInput);
    }
    uniform_indices(available, max_frames.min(available))
}

pub fn load_frame(path: &Path, source_index: u32) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::ImageError(format!("{}: {e}", path.display())))?.to_rgb8();
    let (w, h) = img.dimensions();
    Frame::new(w, h, img.into_raw(), source_index)
}

/// Loads up to `max_frames` uniformly spaced frames from `dir`. Each frame's
/// source index is its position in the directory listing.
pub fn load_frame_dir(dir: &Path, max_frames: usize) -> Result<Vec<Frame>> {
    let paths = list_frames(dir)?;
    keep_indices(paths.len(), max_frames)?.into_iter().map(|i| load_frame(&paths[i], i as u32)).collect()
}

/// Same selection rule applied to pre-extracted per-frame features.
pub fn subsample_features(features: Vec<TokenTensor>, max_frames: usize) -> Result<Vec<TokenTensor>> {
    let keep = keep_indices(features.len(), max_frames)?;
    if keep.len() == features.len() {
        return Ok(features);
    }
    Ok(keep.into_iter().map(|i| features[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_videos_keep_every_frame() {
        assert_eq!(keep_indices(3, 50).unwrap(), vec![0, 1, 2]);
        assert_eq!(keep_indices(100, 4).unwrap(), vec![12, 37, 62, 87]);
        assert_eq!(keep_indices(0, 4).unwrap_err().name(), "EmptyInput");
    }

    #[test]
    fn loads_sorted_images() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b.png", 20u8), ("a.png", 10), ("c.ppm", 30)] {
            let img = image::RgbImage::from_pixel(3, 2, image::Rgb([v, v, v]));
            img.save(dir.path().join(name)).unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let frames = load_frame_dir(dir.path(), 50).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames.iter().map(|f| f.pixel(0, 0)[0]).collect::<Vec<_>>(), vec![10, 20, 30]);
        assert_eq!(frames[2].source_index(), 2);
        assert_eq!((frames[0].width(), frames[0].height()), (3, 2));
    }
}
