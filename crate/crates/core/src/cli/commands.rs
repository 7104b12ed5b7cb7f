use std::fs;
use std::io::Write;
use std::path::Path;

use crate::budget::plan;
use crate::compress::{self, Input};
use crate::error::Error;
use crate::grid::{default_layout, ThumbnailLayout};
use crate::model::{
    tokens_per_image, CompressionConfig, Frame, Ordering, PoolKind, PoolMode, StrategyKind, StrategySpec, TokenPack,
    TokenTensor,
};
use crate::pack::{self, PackHeader};
use crate::tower::{self, TowerKind, VisionTowerSpec};

use super::config_file::{parse_config, Overrides};
use super::frames::{load_frame_dir, subsample_features};
use super::{CliError, CompareArgs, CompressArgs, ConfigArgs, InspectArgs, SweepArgs, SweepParam};

/// Fully resolved pipeline settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub n_frames: usize,
    pub n_thumb_frames: usize,
    pub n_thumbnails: usize,
    pub token_budget: usize,
    pub tokens_per_image: Option<usize>,
    pub resolution: u32,
    pub patch: u32,
    pub dim: Option<usize>,
    pub layout: Option<ThumbnailLayout>,
    pub ordering: Ordering,
    pub strategy: StrategyKind,
    pub pool_mode: PoolMode,
    pub pool_kind: PoolKind,
    pub kernel: usize,
    pub stride: Option<usize>,
}

impl Settings {
    pub fn resolve(o: Overrides) -> Self {
        Self {
            n_frames: o.n_frames.unwrap_or(50),
            n_thumb_frames: o.n_thumb_frames.unwrap_or(6),
            n_thumbnails: o.n_thumbnails.unwrap_or(1),
            token_budget: o.token_budget.unwrap_or(3456),
            tokens_per_image: o.tokens_per_image,
            resolution: o.encoder_resolution.unwrap_or(336),
            patch: o.patch_size.unwrap_or(14),
            dim: o.dim,
            layout: o.thumb_layout,
            ordering: o.ordering.unwrap_or_default(),
            strategy: o.strategy.unwrap_or(StrategyKind::ThumbnailAndSampling),
            pool_mode: o.pool_mode.unwrap_or_default(),
            pool_kind: o.pool_kind.unwrap_or_default(),
            kernel: o.kernel.unwrap_or(2),
            stride: o.stride,
        }
    }

    /// A config for `n_frames` actually available frames.
    pub fn config(&self, n_frames: usize) -> CompressionConfig {
        let strategy = match self.strategy {
            StrategyKind::Concat => StrategySpec::Concat,
            StrategyKind::Pool => StrategySpec::Pool {
                mode: self.pool_mode,
                kind: self.pool_kind,
                kernel: self.kernel,
                stride: self.stride.unwrap_or(self.kernel),
            },
            StrategyKind::Grid => StrategySpec::Grid,
            StrategyKind::Grids => StrategySpec::Grids { frames_per_grid: self.n_thumb_frames },
            StrategyKind::Sample => StrategySpec::Sample { target: self.token_budget },
            StrategyKind::ThumbnailAndSampling => StrategySpec::ThumbnailAndSampling {
                n_thumb: self.n_thumb_frames,
                n_thumbnails: self.n_thumbnails,
                budget: self.token_budget,
            },
        };
        let mut c = CompressionConfig::with_geometry(
            self.resolution,
            self.patch,
            n_frames,
            self.n_thumb_frames,
            self.n_thumbnails,
            self.token_budget,
        );
        c.thumb_layout = self.layout.unwrap_or_else(|| layout_for(self.n_thumb_frames));
        c.ordering = self.ordering;
        c.strategy = strategy;
        if let Some(v) = self.tokens_per_image {
            c.tokens_per_image = v;
        }
        c
    }
}

/// Two columns; odd counts get a half-empty last row.
fn layout_for(n: usize) -> ThumbnailLayout {
    default_layout(n).unwrap_or(ThumbnailLayout { cols: 2, rows: (n.div_ceil(2)).max(1) as u32 })
}

fn load_overrides(args: &ConfigArgs) -> Result<Overrides, CliError> {
    let from_file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            parse_config(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => Overrides::default(),
    };
    Ok(from_file.merge(args.overrides()))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::IoError(std::io::Error::other(e)))?;
            Ok(pool.install(f))
        }
    }
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn rate(n_frames: usize, v: usize, tokens: usize) -> Option<f64> {
    (tokens > 0).then(|| (n_frames * v) as f64 / tokens as f64)
}

enum Loaded {
    Frames(Vec<Frame>),
    Features(Vec<TokenTensor>),
}

fn load_input(path: &Path, max_frames: usize) -> Result<Loaded, CliError> {
    if path.is_dir() {
        Ok(Loaded::Frames(load_frame_dir(path, max_frames)?))
    } else {
        let features = tower::read_feature_file(path)?;
        Ok(Loaded::Features(subsample_features(features, max_frames)?))
    }
}

pub fn compress(args: &CompressArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut overrides = load_overrides(&args.settings)?;
    if let Some(s) = args.strategy {
        overrides.strategy = Some(s.into());
    }
    let settings = Settings::resolve(overrides);
    let loaded = load_input(&args.input, settings.n_frames)?;
    let (input, kind, dim) = match &loaded {
        Loaded::Frames(f) => (Input::Frames(f), TowerKind::Stub, settings.dim.unwrap_or(tower::DEFAULT_DIM)),
        Loaded::Features(t) => {
            (Input::Features(t), TowerKind::FeatureFile(args.input.clone()), settings.dim.unwrap_or(t[0].dim()))
        }
    };
    let config = settings.config(input.len()).validate()?;
    let tower = VisionTowerSpec::new(settings.resolution, settings.patch, dim, kind)?;
    let pack = with_threads(args.threads, || compress::run(input, &config, &tower))??
        .with_source_label(args.input.display().to_string());
    pack::write_pack_file(&pack, &args.out)?;
    if args.manifest {
        pack::write_manifest(&pack, &args.out)?;
    }
    writeln!(out, "{}", summary(&pack))?;
    Ok(())
}

/// One-line description of a pack.
pub fn summary(pack: &TokenPack) -> String {
    let m = pack.meta();
    let mut s = format!(
        "strategy={} frames={} sampled={} thumbnail={} total={}",
        m.strategy,
        m.n_frames,
        pack.sampled_count(),
        pack.thumbnail_count(),
        pack.total_count()
    );
    if let Some(r) = rate(m.n_frames, m.tokens_per_image, pack.total_count()) {
        s.push_str(&format!(" rate={}", fmt4(r)));
    }
    if matches!(m.strategy, StrategyKind::ThumbnailAndSampling) {
        if let Some(r) = rate(m.n_frames, m.tokens_per_image, pack.sampled_count()) {
            s.push_str(&format!(" sampling_rate={}", fmt4(r)));
        }
    }
    s
}

fn stats_line(label: &str, tensors: &[&TokenTensor]) -> String {
    let count: usize = tensors.iter().map(|t| t.num_tokens()).sum();
    let dim = tensors.first().map_or(0, |t| t.dim());
    let values = tensors.iter().flat_map(|t| t.values().iter().copied());
    let (mut min, mut max, mut sum, mut n) = (f32::INFINITY, f32::NEG_INFINITY, 0f64, 0usize);
    for v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v as f64;
        n += 1;
    }
    if n == 0 {
        return format!("{label}: count={count} dim={dim}");
    }
    format!(
        "{label}: count={count} dim={dim} min={} max={} mean={}",
        fmt4(min as f64),
        fmt4(max as f64),
        fmt4(sum / n as f64)
    )
}

fn frame_range(tensors: &[&TokenTensor]) -> Option<(u32, u32)> {
    let mut it = tensors.iter().flat_map(|t| t.provenance().unwrap_or_default()).map(|p| p.frame_index);
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), f| (lo.min(f), hi.max(f))))
}

pub fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pack = pack::read_pack_file(&args.input)?;
    let h = PackHeader::for_pack(&pack);
    writeln!(out, "file: {}", args.input.display())?;
    writeln!(out, "strategy: {}", h.strategy.as_str())?;
    writeln!(out, "ordering: {}", h.ordering)?;
    writeln!(out, "n_frames: {}", h.n_frames)?;
    writeln!(out, "n_thumb_frames: {}", h.n_thumb_frames)?;
    writeln!(out, "n_thumbnails: {}", h.n_thumbnails)?;
    writeln!(out, "tokens_per_image: {}", h.tokens_per_image)?;
    writeln!(out, "dim: {}", h.dim)?;
    writeln!(out, "provenance_included: {}", h.provenance_included)?;
    writeln!(out, "source_label: {}", h.source_label)?;
    writeln!(out, "sampled={} thumbnail={} total={}", h.sampled_count, h.thumbnail_count, h.total_count)?;
    let sampled = [pack.sampled()];
    let thumbs: Vec<&TokenTensor> = pack.thumbnails().iter().collect();
    writeln!(out, "{}", stats_line("sampled", &sampled))?;
    writeln!(out, "{}", stats_line("thumbnail", &thumbs))?;
    if h.provenance_included {
        let fmt = |r: Option<(u32, u32)>| r.map_or("none".to_owned(), |(a, b)| format!("{a}..={b}"));
        writeln!(
            out,
            "provenance: sampled_frames={} thumbnail_images={}",
            fmt(frame_range(&sampled)),
            fmt(frame_range(&thumbs))
        )?;
    }
    Ok(())
}

// Deterministic test pattern at encoder resolution.
fn synthetic_frames(n: usize, resolution: u32) -> Vec<Frame> {
    (0..n)
        .map(|i| {
            let r = resolution as usize;
            let px = (0..r * r)
                .flat_map(|p| {
                    let (x, y) = (p % r, p / r);
                    [(x + i) as u8, (y + 2 * i) as u8, (x ^ y) as u8]
                })
                .collect();
            Frame::new(resolution, resolution, px, i as u32).expect("valid synthetic frame")
        })
        .collect()
}

struct CompareRow {
    strategy: &'static str,
    frames: usize,
    outcome: Result<(usize, Option<usize>), String>,
}

/// Runs one strategy on `frames` synthetic inputs and returns its token
/// count and, for sampling strategies, the sampled-token count.
fn compare_one(
    frames: &[Frame],
    config: CompressionConfig,
    tower: &VisionTowerSpec,
) -> Result<(usize, Option<usize>), String> {
    let config = config.validate().map_err(|e| e.name().to_owned())?;
    let pack = compress::run(Input::Frames(frames), &config, tower).map_err(|e| e.name().to_owned())?;
    let sampled = matches!(pack.meta().strategy, StrategyKind::Sample | StrategyKind::ThumbnailAndSampling)
        .then_some(pack.sampled_count());
    Ok((pack.total_count(), sampled))
}

pub fn compare(args: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let v = tokens_per_image(args.resolution, args.patch)
        .ok_or(Error::ResolutionNotDivisible { resolution: args.resolution, patch_size: args.patch })?;
    let side = (args.resolution / args.patch) as usize;
    let (n, m) = (args.frames, args.budget);
    let thumb = args.thumb_frames.unwrap_or_else(|| ((m / v) & !1).clamp(2, n.max(2)));
    let tower = VisionTowerSpec::stub(args.resolution, args.patch, args.dim)?;
    let all_frames = synthetic_frames(n, args.resolution);
    let base = |frames: usize, strategy: StrategySpec| {
        let mut c = CompressionConfig::with_geometry(args.resolution, args.patch, frames, thumb, 1, m);
        c.thumb_layout = layout_for(thumb);
        c.strategy = strategy;
        c
    };
    let infeasible = |why: &str| Err(why.to_owned());

    let rows = with_threads(args.threads, || {
        let mut rows = Vec::new();

        // as many whole frames as the budget holds
        let concat_frames = n.min(m / v);
        rows.push(CompareRow {
            strategy: "concat",
            frames: concat_frames,
            outcome: if concat_frames == 0 {
                infeasible("BudgetTooSmall")
            } else {
                let fs = &all_frames[..concat_frames];
                compare_one(fs, base(concat_frames, StrategySpec::Concat), &tower)
            },
        });

        // smallest square window that brings every frame under budget
        let kernel = (1..=side).find(|&k| n * (side / k).pow(2) <= m);
        rows.push(CompareRow {
            strategy: "pooling",
            frames: n,
            outcome: match kernel {
                Some(k) if side / k > 0 => compare_one(
                    &all_frames,
                    base(
                        n,
                        StrategySpec::Pool { mode: PoolMode::Avg, kind: PoolKind::Spatial2d, kernel: k, stride: k },
                    ),
                    &tower,
                ),
                _ => infeasible("BudgetTooSmall"),
            },
        });

        rows.push(CompareRow {
            strategy: "grid",
            frames: thumb,
            outcome: if v > m {
                infeasible("BudgetTooSmall")
            } else {
                compare_one(&all_frames, base(n, StrategySpec::Grid), &tower)
            },
        });

        // one grid image per V tokens of budget
        let grids = m / v;
        let per_grid = n.checked_div(grids).unwrap_or(0);
        rows.push(CompareRow {
            strategy: "grids",
            frames: grids * per_grid,
            outcome: if per_grid == 0 {
                infeasible("BudgetTooSmall")
            } else {
                let used = grids * per_grid;
                let picked: Vec<Frame> = crate::sampler::select_uniform(&all_frames, used)
                    .map(|fs| fs.into_iter().cloned().collect())
                    .unwrap_or_default();
                let mut c = base(used, StrategySpec::Grids { frames_per_grid: per_grid });
                c.thumb_layout = layout_for(per_grid);
                compare_one(&picked, c, &tower)
            },
        });

        rows.push(CompareRow {
            strategy: "sampling",
            frames: n,
            outcome: compare_one(&all_frames, base(n, StrategySpec::Sample { target: m.min(n * v) }), &tower),
        });

        let ts = CompressionConfig {
            thumb_layout: layout_for(thumb),
            ..CompressionConfig::with_geometry(args.resolution, args.patch, n, thumb, 1, m)
        };
        rows.push(CompareRow {
            strategy: "thumbnail_and_sampling",
            frames: n,
            outcome: compare_one(&all_frames, ts, &tower),
        });
        rows
    })?;

    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "frames", "token_count", "compression_rate", "sampling_rate", "status"])?;
    for row in rows {
        let frames = row.frames.to_string();
        match row.outcome {
            Ok((tokens, sampled)) => {
                let r = rate(row.frames, v, tokens).map(fmt4).unwrap_or_default();
                let sr = sampled.and_then(|s| rate(row.frames, v, s)).map(fmt4).unwrap_or_default();
                w.write_record([row.strategy, &frames, &tokens.to_string(), &r, &sr, "ok"])?;
            }
            Err(why) => {
                let status = format!("infeasible: {why}");
                w.write_record([row.strategy, &frames, "infeasible", "", "", &status])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let base =
        Settings { strategy: StrategyKind::ThumbnailAndSampling, ..Settings::resolve(load_overrides(&args.settings)?) };
    let mut w = csv::Writer::from_writer(out);
    w.write_record([args.param.as_str(), "thumbnail_tokens", "sampled_tokens", "total_tokens", "rate", "status"])?;
    let mut valid = 0;
    for &value in &args.values {
        let mut s = base.clone();
        match args.param {
            SweepParam::Frames => s.n_frames = value,
            SweepParam::ThumbFrames => {
                s.n_thumb_frames = value;
                if args.settings.layout.is_none() {
                    s.layout = None;
                }
            }
            SweepParam::Thumbnails => s.n_thumbnails = value,
            SweepParam::Budget => s.token_budget = value,
        }
        let planned = s.config(s.n_frames).validate().and_then(|c| plan(&c));
        let v = value.to_string();
        match planned {
            Ok(b) => {
                valid += 1;
                w.write_record([
                    &v,
                    &b.thumbnail_tokens.to_string(),
                    &b.sampled_tokens.to_string(),
                    &b.total.to_string(),
                    &fmt4(b.sampling_compression_rate),
                    "ok",
                ])?;
            }
            Err(e) => {
                let status = format!("invalid: {}", e.name());
                w.write_record([&v, "invalid", "invalid", "invalid", "invalid", &status])?;
            }
        }
    }
    w.flush()?;
    if valid == 0 {
        return Err(CliError::Runtime(Error::InvalidSelection { total: args.values.len(), select: 0 }));
    }
    Ok(())
}
