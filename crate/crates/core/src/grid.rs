//! Grid-view thumbnail composition and the bilinear resampler behind it.
//!
//! Resampling is bilinear with half-pixel centers, evaluated in `f32` in a
//! fixed order and rounded half-to-even, so outputs are bit-identical on
//! every platform.

use crate::error::{Error, Result};
use crate::model::Frame;

/// Columns and rows of a thumbnail grid, filled row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ThumbnailLayout {
    pub cols: u32,
    pub rows: u32,
}

impl ThumbnailLayout {
    pub fn new(cols: u32, rows: u32) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidLayout { cols, rows });
        }
        Ok(Self { cols, rows })
    }

    pub fn capacity(&self) -> usize {
        self.cols as usize * self.rows as usize
    }
}

impl std::fmt::Display for ThumbnailLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

impl std::str::FromStr for ThumbnailLayout {
    type Err = String;

    /// Parses `COLSxROWS`, e.g. `2x3`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (c, r) = s.trim().split_once(['x', 'X']).ok_or_else(|| format!("layout `{s}` is not COLSxROWS"))?;
        let cols = c.trim().parse().map_err(|e| format!("layout cols: {e}"))?;
        let rows = r.trim().parse().map_err(|e| format!("layout rows: {e}"))?;
        ThumbnailLayout::new(cols, rows).map_err(|e| e.to_string())
    }
}

/// Two columns, `n_thumb / 2` rows.
pub fn default_layout(n_thumb: usize) -> Result<ThumbnailLayout> {
    if n_thumb == 0 {
        return Err(Error::ZeroThumbFrames);
    }
    if !n_thumb.is_multiple_of(2) {
        return Err(Error::OddThumbFrames(n_thumb));
    }
    let rows = u32::try_from(n_thumb / 2).map_err(|_| Error::OddThumbFrames(n_thumb))?;
    ThumbnailLayout::new(2, rows)
}

// Source sample position for one output coordinate.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

fn taps(src: u32, dst: u32) -> Vec<Tap> {
    let scale = src as f32 / dst as f32;
    let last = src as usize - 1;
    (0..dst)
        .map(|o| {
            let pos = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(last);
            Tap { lo, hi: (lo + 1).min(last), frac: pos - lo as f32 }
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

// Resizes `src` into the `dst_w x dst_h` window at (`x0`, `y0`) of `canvas`.
fn resize_into(src: &Frame, dst_w: u32, dst_h: u32, canvas: &mut [u8], canvas_w: u32, x0: u32, y0: u32) {
    let xs = taps(src.width(), dst_w);
    let ys = taps(src.height(), dst_h);
    let sp = src.pixels();
    let sw = src.width() as usize;
    for (dy, ty) in ys.iter().enumerate() {
        let row_lo = ty.lo * sw;
        let row_hi = ty.hi * sw;
        let out_row = ((y0 as usize + dy) * canvas_w as usize + x0 as usize) * 3;
        for (dx, tx) in xs.iter().enumerate() {
            let out = out_row + dx * 3;
            for c in 0..3 {
                let p00 = sp[(row_lo + tx.lo) * 3 + c] as f32;
                let p01 = sp[(row_lo + tx.hi) * 3 + c] as f32;
                let p10 = sp[(row_hi + tx.lo) * 3 + c] as f32;
                let p11 = sp[(row_hi + tx.hi) * 3 + c] as f32;
                let top = lerp(p00, p01, tx.frac);
                let bottom = lerp(p10, p11, tx.frac);
                let v = lerp(top, bottom, ty.frac);
                canvas[out + c] = v.round_ties_even().clamp(0.0, 255.0) as u8;
            }
        }
    }
}

/// Bilinear resize with half-pixel centers. Keeps the source index.
pub fn resize_bilinear(frame: &Frame, width: u32, height: u32) -> Result<Frame> {
    if width == 0 || height == 0 {
        return Err(Error::BadFrameBuffer { width, height, expected: 0, actual: 0 });
    }
    let mut out = vec![0u8; width as usize * height as usize * 3];
    resize_into(frame, width, height, &mut out, width, 0, 0);
    Frame::new(width, height, out, frame.source_index())
}

/// Resizes to a square of side `target`, skipping the work when the frame
/// already has that size.
pub fn fit_square(frame: &Frame, target: u32) -> Result<Frame> {
    if frame.width() == target && frame.height() == target {
        Ok(frame.clone())
    } else {
        resize_bilinear(frame, target, target)
    }
}

/// Pixel extent of every cell along one axis; the last cell takes the
/// remainder.
fn cell_extents(total: u32, cells: u32) -> Vec<(u32, u32)> {
    let base = total / cells;
    (0..cells)
        .map(|i| {
            let start = i * base;
            let len = if i + 1 == cells { total - start } else { base };
            (start, len)
        })
        .collect()
}

/// Tiles `frames` row-major into a `target x target` grid-view image.
///
/// Each frame is stretched to its cell. Unused cells stay black. The
/// returned frame has source index 0; callers stamp their own ordinal with
/// [`Frame::with_source_index`].
pub fn compose_thumbnail(frames: &[&Frame], layout: ThumbnailLayout, target: u32) -> Result<Frame> {
    let ThumbnailLayout { cols, rows } = layout;
    if cols == 0 || rows == 0 {
        return Err(Error::InvalidLayout { cols, rows });
    }
    if frames.len() > layout.capacity() {
        return Err(Error::TooManyFrames { cols, rows, frames: frames.len() });
    }
    if target < cols || target < rows {
        return Err(Error::CanvasTooSmall { target, cols, rows });
    }
    let xs = cell_extents(target, cols);
    let ys = cell_extents(target, rows);
    let mut canvas = vec![0u8; target as usize * target as usize * 3];
    for (i, frame) in frames.iter().enumerate() {
        let (x0, w) = xs[i % cols as usize];
        let (y0, h) = ys[i / cols as usize];
        resize_into(frame, w, h, &mut canvas, target, x0, y0);
    }
    Frame::new(target, target, canvas, 0)
}
