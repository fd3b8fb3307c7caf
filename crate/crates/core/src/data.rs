//! Synthetic moving-square videos, clip sampling and frame I/O.
//!
//! Classes come in reversal pairs: class `2j+1` shows exactly the frames of
//! class `2j` in reverse order. A pair therefore has identical frame
//! multisets, so anything that pools frames order-insensitively (a temporal
//! mean, for instance) cannot tell the two classes apart.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, Scalar, Tensor};
use crate::tspool::ClipTensor;

pub const MAX_CLASSES: usize = 8;

/// Human-readable motion of each synthetic class.
pub const CLASS_NAMES: [&str; MAX_CLASSES] = [
    "left-to-right",
    "right-to-left",
    "top-left-to-bottom-right",
    "bottom-right-to-top-left",
    "top-to-bottom",
    "bottom-to-top",
    "top-right-to-bottom-left",
    "bottom-left-to-top-right",
];

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord<T> {
    pub frames: ClipTensor<T>,
    pub label: usize,
    pub id: String,
    /// Videos sharing a group (e.g. a trajectory and its reversal) are kept
    /// on the same side of a train/test split.
    pub group: usize,
}

impl<T: Scalar> VideoRecord<T> {
    pub fn len(&self) -> usize {
        self.frames.k()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
    /// Side of the moving square in pixels; `None` picks a quarter of the
    /// smaller frame side.
    #[serde(default)]
    pub square_size: Option<f64>,
}

fn one() -> usize {
    1
}

impl SyntheticSpec {
    /// Forward/reversed horizontal pair used by the order-only benchmark.
    pub fn reversal_pair(frames_per_video: usize, size: usize, seed: u64) -> Self {
        Self {
            num_classes: 2,
            frames_per_video,
            height: size,
            width: size,
            channels: 1,
            noise_std: 0.0,
            seed,
            square_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return Err(Error::Config(format!(
                "synthetic data supports 2..={MAX_CLASSES} classes, got {}",
                self.num_classes
            )));
        }
        if self.frames_per_video < 2 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Config("need >= 2 frames and non-empty frames".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        let s = self.side();
        if !(s > 0.0) || s > self.height.min(self.width) as f64 {
            return Err(Error::Config(format!("square size {s} does not fit the frame")));
        }
        Ok(())
    }

    fn side(&self) -> f64 {
        self.square_size
            .unwrap_or_else(|| (self.height.min(self.width) as f64 / 4.0).max(1.0))
    }
}

/// Area of `[a0, a1] ∩ [b0, b1]`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Anti-aliased square with top-left corner `(x, y)`.
fn render(spec: &SyntheticSpec, x: f64, y: f64, brightness: f64, out: &mut Vec<f64>) {
    let s = spec.side();
    for py in 0..spec.height {
        let cy = overlap(py as f64, py as f64 + 1.0, y, y + s);
        for px in 0..spec.width {
            let cx = overlap(px as f64, px as f64 + 1.0, x, x + s);
            let v = brightness * cx * cy;
            for _ in 0..spec.channels {
                out.push(v);
            }
        }
    }
}

struct Trajectory {
    /// offset perpendicular to the motion, in [0, 1]
    lateral: f64,
    brightness: f64,
}

/// Forward-direction frames of motion pattern `pair` (0: horizontal,
/// 1: main diagonal, 2: vertical, 3: anti-diagonal).
fn forward_frames(spec: &SyntheticSpec, pair: usize, tr: &Trajectory) -> Vec<Vec<f64>> {
    let s = spec.side();
    let (xr, yr) = (spec.width as f64 - s, spec.height as f64 - s);
    let n = spec.frames_per_video;
    (0..n)
        .map(|t| {
            let f = t as f64 / (n - 1) as f64;
            let (x, y) = match pair {
                0 => (f * xr, tr.lateral * yr),
                1 => (f * xr, f * yr),
                2 => (tr.lateral * xr, f * yr),
                _ => ((1.0 - f) * xr, f * yr),
            };
            let mut frame = Vec::with_capacity(spec.height * spec.width * spec.channels);
            render(spec, x, y, tr.brightness, &mut frame);
            frame
        })
        .collect()
}

/// Generates `n_per_class` videos for every class. Deterministic in `spec`.
///
/// Video `i` of every class shares one trajectory (lateral offset and
/// brightness); odd classes play their pair's frames backwards. Gaussian
/// noise is added per pixel afterwards and clamped to `[0, 1]`.
pub fn generate<T: Scalar>(spec: &SyntheticSpec, n_per_class: usize) -> Result<Vec<VideoRecord<T>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std.max(0.0))
        .map_err(|e| Error::Config(format!("noise: {e}")))?;
    let dims = vec![spec.frames_per_video, spec.height, spec.width, spec.channels];
    let mut out = Vec::with_capacity(n_per_class * spec.num_classes);
    for i in 0..n_per_class {
        let tr = Trajectory {
            lateral: rng.random_range(0.0..=1.0),
            brightness: rng.random_range(0.7..=1.0),
        };
        for label in 0..spec.num_classes {
            let mut frames = forward_frames(spec, label / 2, &tr);
            if label % 2 == 1 {
                frames.reverse();
            }
            let mut data: Vec<T> = Vec::with_capacity(frames.len() * frames[0].len());
            for v in frames.into_iter().flatten() {
                let v = if spec.noise_std > 0.0 {
                    (v + noise.sample(&mut rng)).clamp(0.0, 1.0)
                } else {
                    v
                };
                data.push(T::of(v));
            }
            out.push(VideoRecord {
                frames: ClipTensor::new(Tensor::new(dims.clone(), data)?)?,
                label,
                id: format!("c{label}_v{i:04}"),
                group: i,
            });
        }
    }
    Ok(out)
}

/// How a clip is taken from a video.
#[derive(Debug)]
pub enum SampleMode<'a, R: Rng> {
    /// Start index uniform over every valid position.
    Random(&'a mut R),
    /// The `index`-th of `count` evenly spaced start positions.
    Uniform { index: usize, count: usize },
}

/// Start frame of the `index`-th of `count` evenly spaced clips.
pub fn uniform_start(len: usize, k: usize, index: usize, count: usize) -> usize {
    if count <= 1 {
        0
    } else {
        (len - k) * index / (count - 1)
    }
}

/// Cuts `k` consecutive frames out of a video.
pub fn sample_clip<T: Scalar, R: Rng>(v: &VideoRecord<T>, k: usize, mode: SampleMode<'_, R>) -> Result<ClipTensor<T>> {
    let len = v.len();
    if k == 0 || len < k {
        return Err(Error::Data(format!(
            "video `{}` has {len} frames, clip needs {k}",
            v.id
        )));
    }
    let start = match mode {
        SampleMode::Random(rng) => rng.random_range(0..=len - k),
        SampleMode::Uniform { index, count } => {
            if count == 0 || index >= count {
                return Err(Error::Data(format!("clip index {index} of {count}")));
            }
            uniform_start(len, k, index, count)
        }
    };
    let per = v.frames.pixels();
    let (h, w, c) = v.frames.frame_dims();
    let data = v.frames.frames().data()[start * per..(start + k) * per].to_vec();
    ClipTensor::new(Tensor::new(vec![k, h, w, c], data)?)
}

/// Seeded split that keeps groups together. Returns `(train, test)`.
pub fn train_test_split<T: Clone>(
    records: &[VideoRecord<T>],
    test_fraction: f64,
    seed: u64,
) -> (Vec<VideoRecord<T>>, Vec<VideoRecord<T>>) {
    let mut groups: Vec<usize> = records.iter().map(|r| r.group).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let n_test = ((groups.len() as f64) * test_fraction).round() as usize;
    let test_groups: std::collections::HashSet<usize> = groups[..n_test].iter().copied().collect();
    records
        .iter()
        .cloned()
        .partition(|r| !test_groups.contains(&r.group))
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm" | "ppm" | "pnm")
    )
}

fn decode(path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color().has_color();
    let wide = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let (c, data) = match (color, wide) {
        (false, false) => (1, img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        (false, true) => (1, img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        (true, false) => (3, img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        (true, true) => (3, img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
    };
    Ok((h, w, c, data))
}

/// Loads a clip from a directory of equally sized PNG/PGM/PPM frames
/// (lexicographic order) or from a `TSQ1` tensor file. Image intensities
/// are scaled to `[0, 1]`.
pub fn load_frames<T: Scalar>(path: impl AsRef<Path>) -> Result<ClipTensor<T>> {
    let path = path.as_ref();
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        let t = read_tensor(path)?.into_precision::<T>();
        let t = match t.rank() {
            3 => {
                let s = t.shape().to_vec();
                t.reshape(&[s[0], s[1], s[2], 1])?
            }
            4 => t,
            r => return Err(Error::format(path, format!("expected a rank 3 or 4 tensor, got rank {r}"))),
        };
        return ClipTensor::new(t);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && is_frame_file(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no frames found in {}", path.display())));
    }
    let mut dims = None;
    let mut data = Vec::new();
    for f in &files {
        let (h, w, c, px) = decode(f)?;
        match dims {
            None => dims = Some((h, w, c)),
            Some(d) if d != (h, w, c) => {
                return Err(Error::format(
                    f,
                    format!("frame is {h}x{w}x{c}, earlier frames are {}x{}x{}", d.0, d.1, d.2),
                ))
            }
            _ => {}
        }
        data.extend(px.into_iter().map(T::of));
    }
    let (h, w, c) = dims.expect("at least one frame");
    ClipTensor::new(Tensor::new(vec![files.len(), h, w, c], data)?)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn write_image(path: &Path, h: usize, w: usize, c: usize, px: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = px.iter().map(|&v| to_u8(v)).collect();
    let img = match c {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer size"),
        ),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer size")),
        _ => unreachable!("caller splits other channel counts"),
    };
    img.save(path).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `frames` (values in `[0, 1]`) as `frame_%05d.png`.
pub fn save_frames<T: Scalar>(clip: &ClipTensor<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w, c) = clip.frame_dims();
    if c != 1 && c != 3 {
        return Err(Error::Data(format!("cannot write {c}-channel frames as PNG")));
    }
    let per = clip.pixels();
    for t in 0..clip.k() {
        let px: Vec<f64> = clip.frames().data()[t * per..(t + 1) * per]
            .iter()
            .map(|x| x.to_f64_lossy())
            .collect();
        write_image(&dir.join(format!("frame_{t:05}.png")), h, w, c, &px)?;
    }
    Ok(())
}

/// Min and max of each squeezed frame as used for the PNG rendering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRange {
    pub min: f64,
    pub max: f64,
}

/// Per-frame min-max normalization to `[0, 1]`; a zero range maps to 0.
pub fn normalize_frame(px: &[f64]) -> (Vec<f64>, FrameRange) {
    let min = px.iter().copied().fold(f64::INFINITY, f64::min);
    let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let out = if range > 0.0 {
        px.iter().map(|&v| (v - min) / range).collect()
    } else {
        vec![0.0; px.len()]
    };
    (out, FrameRange { min, max })
}

pub const SQUEEZED_TENSOR: &str = "squeezed.tsq";
pub const NORMALIZATION_SIDECAR: &str = "normalization.txt";

/// Writes a `D×H×W×C` squeezed stack to `dir`: the raw coefficients as
/// `squeezed.tsq`, each frame as `squeezed_%05d.png` after per-frame min-max
/// normalization, and the ranges used in `normalization.txt`. Channel
/// counts other than 1 and 3 get one grayscale PNG per channel
/// (`squeezed_%05d_c%d.png`).
pub fn save_squeezed<T: Scalar>(y: &Tensor<T>, dir: impl AsRef<Path>) -> Result<Vec<FrameRange>> {
    let dir = dir.as_ref();
    if y.rank() != 4 {
        return Err(Error::Shape(format!("squeezed stack must be D×H×W×C, got {:?}", y.shape())));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(y, dir.join(SQUEEZED_TENSOR))?;
    let [d, h, w, c]: [usize; 4] = y.shape().try_into().expect("rank 4");
    let per = h * w * c;
    let mut ranges = Vec::with_capacity(d);
    let mut sidecar = String::from("# frame min max (png = (v - min) / (max - min), zero range -> 0)\n");
    for f in 0..d {
        let px: Vec<f64> = y.data()[f * per..(f + 1) * per].iter().map(|x| x.to_f64_lossy()).collect();
        let (norm, range) = normalize_frame(&px);
        sidecar.push_str(&format!("{f} {:.17e} {:.17e}\n", range.min, range.max));
        if c == 1 || c == 3 {
            write_image(&dir.join(format!("squeezed_{f:05}.png")), h, w, c, &norm)?;
        } else {
            for ch in 0..c {
                let plane: Vec<f64> = norm.iter().skip(ch).step_by(c).copied().collect();
                write_image(&dir.join(format!("squeezed_{f:05}_c{ch}.png")), h, w, 1, &plane)?;
            }
        }
        ranges.push(range);
    }
    let side = dir.join(NORMALIZATION_SIDECAR);
    fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))?;
    Ok(ranges)
}

/// One row of a dataset manifest; `path` is relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: usize,
    #[serde(default)]
    pub group: Option<usize>,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes every video as `<dir>/<id>/frame_%05d.png` plus `manifest.json`.
/// Frames are quantized to 8 bits.
pub fn write_dataset<T: Scalar>(records: &[VideoRecord<T>], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for r in records {
        save_frames(&r.frames, dir.join(&r.id))?;
    }
    let path = dir.join(MANIFEST);
    write_manifest(&manifest_entries(records, Path::new("")), &path)?;
    Ok(path)
}

/// Manifest rows for videos stored under `prefix/<id>`.
pub fn manifest_entries<T>(records: &[VideoRecord<T>], prefix: &Path) -> Vec<ManifestEntry> {
    records
        .iter()
        .map(|r| ManifestEntry {
            id: r.id.clone(),
            path: prefix.join(&r.id),
            label: r.label,
            group: Some(r.group),
        })
        .collect()
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(entries).expect("manifest serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Reads a manifest and every video it lists. Videos without a group get
/// their own.
pub fn load_dataset<T: Scalar>(manifest: impl AsRef<Path>) -> Result<Vec<VideoRecord<T>>> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::format(manifest, e.to_string()))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = std::collections::HashSet::new();
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            if !seen.insert(e.id.clone()) {
                return Err(Error::format(manifest, format!("duplicate video id `{}`", e.id)));
            }
            Ok(VideoRecord {
                frames: load_frames(base.join(&e.path))?,
                label: e.label,
                id: e.id,
                group: e.group.unwrap_or(usize::MAX / 2 + i),
            })
        })
        .collect()
}

/// Temporal mean frame of a video.
pub fn mean_frame<T: Scalar>(v: &VideoRecord<T>) -> Tensor<T> {
    v.frames.frames().reduce_mean(&[0]).expect("rank 4")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_spec() -> SyntheticSpec {
        SyntheticSpec::reversal_pair(12, 16, 3)
    }

    #[test]
    fn square_moves_proportionally() {
        let mut spec = pair_spec();
        spec.square_size = Some(4.0);
        let v = &generate::<f64>(&spec, 1).unwrap()[0];
        // centroid x advances by (W − S)/(L − 1) per frame
        let step = 12.0 / 11.0;
        for t in 0..12 {
            let mut mass = 0.0;
            let mut mx = 0.0;
            for y in 0..16 {
                for x in 0..16 {
                    let p = v.frames.frames().at(&[t, y, x, 0]);
                    mass += p;
                    mx += p * (x as f64 + 0.5);
                }
            }
            assert!((mx / mass - (2.0 + step * t as f64)).abs() < 1e-9, "frame {t}");
        }
    }

    #[test]
    fn reversal_pair_has_identical_mean_frames() {
        let recs = generate::<f64>(&pair_spec(), 5).unwrap();
        for pair in recs.chunks(2) {
            let d = mean_frame(&pair[0]).sub(&mean_frame(&pair[1])).unwrap().max_abs();
            assert!(d < 1e-12);
            assert_ne!(pair[0].frames, pair[1].frames);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = pair_spec();
        spec.noise_std = 0.1;
        spec.num_classes = 4;
        let a = generate::<f32>(&spec, 3).unwrap();
        let b = generate::<f32>(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.frames.frames().data().iter().all(|&x| (0.0..=1.0).contains(&x))));
        spec.seed += 1;
        assert_ne!(a, generate::<f32>(&spec, 3).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = pair_spec();
        s.num_classes = 9;
        assert!(generate::<f64>(&s, 1).is_err());
        let mut s = pair_spec();
        s.square_size = Some(40.0);
        assert!(generate::<f64>(&s, 1).is_err());
    }

    #[test]
    fn uniform_starts() {
        let recs = generate::<f64>(&SyntheticSpec::reversal_pair(20, 4, 1), 1).unwrap();
        let v = &recs[0];
        let starts: Vec<usize> = (0..3).map(|i| uniform_start(20, 10, i, 3)).collect();
        assert_eq!(starts, vec![0, 5, 10]);
        let per = v.frames.pixels();
        for (i, &s) in starts.iter().enumerate() {
            let c = sample_clip::<f64, ChaCha8Rng>(v, 10, SampleMode::Uniform { index: i, count: 3 }).unwrap();
            assert_eq!(c.frames().data(), &v.frames.frames().data()[s * per..(s + 10) * per]);
        }
        assert_eq!(uniform_start(20, 10, 0, 1), 0);
    }

    #[test]
    fn whole_video_when_length_is_k() {
        let recs = generate::<f64>(&SyntheticSpec::reversal_pair(10, 4, 1), 1).unwrap();
        let v = &recs[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_clip(v, 10, SampleMode::Random(&mut rng)).unwrap();
        let u = sample_clip::<f64, ChaCha8Rng>(v, 10, SampleMode::Uniform { index: 0, count: 1 }).unwrap();
        assert_eq!(&r, &v.frames);
        assert_eq!(&u, &v.frames);
    }

    #[test]
    fn short_video_is_a_data_error() {
        let recs = generate::<f64>(&SyntheticSpec::reversal_pair(9, 4, 1), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_clip(&recs[0], 10, SampleMode::Random(&mut rng)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn split_keeps_groups_together() {
        let recs = generate::<f64>(&SyntheticSpec::reversal_pair(4, 4, 1), 125).unwrap();
        let (train, test) = train_test_split(&recs, 0.2, 7);
        assert_eq!(train.len(), 200);
        assert_eq!(test.len(), 50);
        let train_groups: std::collections::HashSet<usize> = train.iter().map(|r| r.group).collect();
        assert!(test.iter().all(|r| !train_groups.contains(&r.group)));
        let (train2, _) = train_test_split(&recs, 0.2, 7);
        assert_eq!(train, train2);
    }

    #[test]
    fn normalization_guards_zero_range() {
        let (n, r) = normalize_frame(&[0.3, 0.3, 0.3]);
        assert_eq!(n, vec![0.0; 3]);
        assert_eq!(r, FrameRange { min: 0.3, max: 0.3 });
        let (n, _) = normalize_frame(&[-1.0, 0.0, 3.0]);
        assert_eq!(n, vec![0.0, 0.25, 1.0]);
    }
}
