//! `key = value` config files.
//!
//! Keys mirror [`CompressionConfig`](crate::CompressionConfig) field names,
//! plus the pooling and tower parameters the CLI exposes. Blank lines and
//! lines starting with `#` are skipped.

use std::fmt;
use std::str::FromStr;

use crate::grid::ThumbnailLayout;
use crate::model::{Ordering, PoolKind, PoolMode, StrategyKind};

/// Settings that may come from a config file or flags; `None` means "not
/// given here".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub n_frames: Option<usize>,
    pub n_thumb_frames: Option<usize>,
    pub n_thumbnails: Option<usize>,
    pub token_budget: Option<usize>,
    pub tokens_per_image: Option<usize>,
    pub encoder_resolution: Option<u32>,
    pub patch_size: Option<u32>,
    pub thumb_layout: Option<ThumbnailLayout>,
    pub ordering: Option<Ordering>,
    pub strategy: Option<StrategyKind>,
    pub pool_mode: Option<PoolMode>,
    pub pool_kind: Option<PoolKind>,
    pub kernel: Option<usize>,
    pub stride: Option<usize>,
    pub dim: Option<usize>,
}

impl Overrides {
    /// Fields set in `other` win.
    pub fn merge(self, other: Overrides) -> Overrides {
        Overrides {
            n_frames: other.n_frames.or(self.n_frames),
            n_thumb_frames: other.n_thumb_frames.or(self.n_thumb_frames),
            n_thumbnails: other.n_thumbnails.or(self.n_thumbnails),
            token_budget: other.token_budget.or(self.token_budget),
            tokens_per_image: other.tokens_per_image.or(self.tokens_per_image),
            encoder_resolution: other.encoder_resolution.or(self.encoder_resolution),
            patch_size: other.patch_size.or(self.patch_size),
            thumb_layout: other.thumb_layout.or(self.thumb_layout),
            ordering: other.ordering.or(self.ordering),
            strategy: other.strategy.or(self.strategy),
            pool_mode: other.pool_mode.or(self.pool_mode),
            pool_kind: other.pool_kind.or(self.pool_kind),
            kernel: other.kernel.or(self.kernel),
            stride: other.stride.or(self.stride),
            dim: other.dim.or(self.dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigFileError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigFileError {}

fn set<T: FromStr>(slot: &mut Option<T>, value: &str, key: &str) -> Result<(), String>
where
    T::Err: fmt::Display,
{
    if slot.is_some() {
        return Err(format!("duplicate key `{key}`"));
    }
    *slot = Some(value.parse().map_err(|e| format!("{key}: {e}"))?);
    Ok(())
}

pub fn parse_config(text: &str) -> Result<Overrides, ConfigFileError> {
    let mut o = Overrides::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ConfigFileError { line: i + 1, message };
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let r = match key {
            "n_frames" => set(&mut o.n_frames, value, key),
            "n_thumb_frames" => set(&mut o.n_thumb_frames, value, key),
            "n_thumbnails" => set(&mut o.n_thumbnails, value, key),
            "token_budget" => set(&mut o.token_budget, value, key),
            "tokens_per_image" => set(&mut o.tokens_per_image, value, key),
            "encoder_resolution" => set(&mut o.encoder_resolution, value, key),
            "patch_size" => set(&mut o.patch_size, value, key),
            "thumb_layout" => set(&mut o.thumb_layout, value, key),
            "ordering" => set(&mut o.ordering, value, key),
            "strategy" => set(&mut o.strategy, value, key),
            "pool_mode" => set(&mut o.pool_mode, value, key),
            "pool_kind" => set(&mut o.pool_kind, value, key),
            "kernel" => set(&mut o.kernel, value, key),
            "stride" => set(&mut o.stride, value, key),
            "dim" => set(&mut o.dim, value, key),
            other => Err(format!("unknown key `{other}`")),
        };
        r.map_err(err)?;
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = "\
# defaults
n_frames = 50
n_thumb_frames=6
n_thumbnails = 1
token_budget = 3456
tokens_per_image = 576
encoder_resolution = 336
patch_size = 14
thumb_layout = 2x3
ordering = thumbnail_first
strategy = ts

pool_mode = max
pool_kind = seq1d
kernel = 3
stride = 3
dim = 16
";
        let o = parse_config(text).unwrap();
        assert_eq!(o.n_frames, Some(50));
        assert_eq!(o.thumb_layout, Some(ThumbnailLayout { cols: 2, rows: 3 }));
        assert_eq!(o.ordering, Some(Ordering::ThumbnailFirst));
        assert_eq!(o.strategy, Some(StrategyKind::ThumbnailAndSampling));
        assert_eq!(o.pool_mode, Some(PoolMode::Max));
        assert_eq!(o.pool_kind, Some(PoolKind::Seq1d));
        assert_eq!(o.dim, Some(16));
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse_config("n_frames = 5\n\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("bogus"));
        let e = parse_config("n_frames = five").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(parse_config("n_frames 5").is_err());
        assert!(parse_config("n_frames = 1\nn_frames = 2").unwrap_err().message.contains("duplicate"));
    }

    #[test]
    fn merge_prefers_later() {
        let a = parse_config("n_frames = 5\ndim = 3").unwrap();
        let b = parse_config("n_frames = 7").unwrap();
        let m = a.merge(b);
        assert_eq!(m.n_frames, Some(7));
        assert_eq!(m.dim, Some(3));
    }
}
