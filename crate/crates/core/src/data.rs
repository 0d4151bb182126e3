//! Image pairs: PNG I/O, patch extraction and a seeded synthetic generator.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::{Shape, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("image file not found: {0}")]
    Missing(PathBuf),
    #[error("{path}: expected 3 channels (8-bit RGB), found {channels}")]
    ChannelCount { path: PathBuf, channels: usize },
    #[error("{path}: malformed PNG: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("{path}: cannot write PNG: {detail}")]
    Write { path: PathBuf, detail: String },
    #[error("invalid image pair: {0}")]
    Pair(String),
    #[error("invalid patch request: {0}")]
    Patch(String),
    #[error("invalid synthetic config: {0}")]
    Synthetic(String),
}

type Result<T> = std::result::Result<T, ImageError>;

/// A degraded image and its target, both 1×3×H×W with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub low: Tensor<f32>,
    pub high: Tensor<f32>,
}

impl ImagePair {
    /// Checks shape equality, 3 channels, batch 1 and the [0, 1] range.
    pub fn new(low: Tensor<f32>, high: Tensor<f32>) -> Result<Self> {
        let pair = ImagePair { low, high };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.low.shape();
        if s != self.high.shape() {
            return Err(ImageError::Pair(format!(
                "low {:?} and high {:?} differ in shape",
                s,
                self.high.shape()
            )));
        }
        if s.n != 1 || s.c != 3 {
            return Err(ImageError::Pair(format!("expected 1×3×H×W, got {s:?}")));
        }
        let in_range = |t: &Tensor<f32>| t.data().iter().all(|v| (0.0..=1.0).contains(v));
        if !in_range(&self.low) || !in_range(&self.high) {
            return Err(ImageError::Pair("values outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.low.shape().h
    }

    pub fn width(&self) -> usize {
        self.low.shape().w
    }
}

/// Reads an 8-bit RGB PNG as a 1×3×H×W tensor with values v/255.
pub fn load_png(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let malformed = |e: &dyn std::fmt::Display| ImageError::Malformed {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ImageError::Missing(path.to_path_buf()),
        _ => malformed(&e),
    })?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| malformed(&e))?;
    let (color, depth) = reader.output_color_type();
    let channels = color.samples();
    if channels != 3 {
        return Err(ImageError::ChannelCount {
            path: path.to_path_buf(),
            channels,
        });
    }
    if depth != png::BitDepth::Eight {
        return Err(malformed(&format!("expected 8-bit samples, found {depth:?}")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| malformed(&"image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| malformed(&e))?;
    let (h, w) = (info.height as usize, info.width as usize);
    let stride = info.line_size;
    let mut data = vec![0f32; 3 * h * w];
    for y in 0..h {
        let row = &buf[y * stride..y * stride + 3 * w];
        for x in 0..w {
            for c in 0..3 {
                data[c * h * w + y * w + x] = row[3 * x + c] as f32 / 255.0;
            }
        }
    }
    Tensor::from_vec(Shape::new(1, 3, h, w), data).map_err(|e| malformed(&e))
}

/// Writes a 1×3×H×W tensor as an 8-bit RGB PNG, storing round(v·255)
/// clamped to [0, 255].
pub fn save_png(t: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fail = |e: &dyn std::fmt::Display| ImageError::Write {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(ImageError::ChannelCount {
            path: path.to_path_buf(),
            channels: s.c,
        });
    }
    let (h, w) = (s.h, s.w);
    let mut bytes = vec![0u8; 3 * h * w];
    let d = t.data();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = d[c * h * w + y * w + x];
                let v = if v.is_nan() { 0.0 } else { v };
                bytes[3 * (y * w + x) + c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let file = File::create(path).map_err(|e| fail(&e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| fail(&e))?;
    writer.write_image_data(&bytes).map_err(|e| fail(&e))?;
    writer.finish().map_err(|e| fail(&e))
}

/// Loads `<dir>/low/*.png` and `<dir>/high/*.png` paired by file name,
/// in sorted name order.
pub fn load_pair_dir(dir: impl AsRef<Path>) -> Result<Vec<ImagePair>> {
    let dir = dir.as_ref();
    let low_dir = dir.join("low");
    let high_dir = dir.join("high");
    if !low_dir.is_dir() {
        return Err(ImageError::Missing(low_dir));
    }
    let mut names: Vec<PathBuf> = std::fs::read_dir(&low_dir)
        .map_err(|_| ImageError::Missing(low_dir.clone()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(ImageError::Pair(format!("no PNG files in {}", low_dir.display())));
    }
    names
        .iter()
        .map(|p| {
            let name = p.file_name().expect("listed file");
            let low = load_png(p)?;
            let high = load_png(high_dir.join(name))?;
            ImagePair::new(low, high)
        })
        .collect()
}

/// Writes pairs as `<dir>/low/NNNN.png` and `<dir>/high/NNNN.png`.
pub fn save_pair_dir(pairs: &[ImagePair], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["low", "high"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| ImageError::Write {
            path: dir.join(sub),
            detail: e.to_string(),
        })?;
    }
    for (i, p) in pairs.iter().enumerate() {
        let name = format!("{i:04}.png");
        save_png(&p.low, dir.join("low").join(&name))?;
        save_png(&p.high, dir.join("high").join(&name))?;
    }
    Ok(())
}

fn crop(t: &Tensor<f32>, y0: usize, x0: usize, size: usize) -> Tensor<f32> {
    let s = t.shape();
    let mut data = Vec::with_capacity(s.c * size * size);
    for c in 0..s.c {
        let plane = t.plane(0, c);
        for y in y0..y0 + size {
            data.extend_from_slice(&plane[y * s.w + x0..y * s.w + x0 + size]);
        }
    }
    Tensor::from_vec(Shape::new(1, s.c, size, size), data).expect("crop inside bounds")
}

/// Square crops at identical grid coordinates in both images, row-major;
/// shuffled when a seed is given.
pub fn extract_patches(pair: &ImagePair, patch: usize, stride: usize, seed: Option<u64>) -> Result<Vec<ImagePair>> {
    pair.validate()?;
    let (h, w) = (pair.height(), pair.width());
    if patch == 0 || stride == 0 {
        return Err(ImageError::Patch("patch and stride must be positive".into()));
    }
    if patch > h || patch > w {
        return Err(ImageError::Patch(format!("patch {patch} larger than image {h}×{w}")));
    }
    let mut out = Vec::new();
    for y in (0..=h - patch).step_by(stride) {
        for x in (0..=w - patch).step_by(stride) {
            out.push(ImagePair {
                low: crop(&pair.low, y, x, patch),
                high: crop(&pair.high, y, x, patch),
            });
        }
    }
    if let Some(seed) = seed {
        out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(out)
}

/// Seeded synthetic pairs: a procedural scene and a degraded copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub count: usize,
    /// Patch side, a multiple of 8.
    pub size: usize,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub color_gain: [f64; 3],
    /// The low image is `high^(1 + gamma_shift)` before the other steps.
    pub gamma_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            count: 16,
            size: 32,
            blur_sigma: 0.7,
            noise_sigma: 0.01,
            color_gain: [1.1, 0.95, 0.85],
            gamma_shift: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// No degradation: `low == high`.
    pub fn identity() -> Self {
        SyntheticConfig {
            blur_sigma: 0.0,
            noise_sigma: 0.0,
            color_gain: [1.0; 3],
            gamma_shift: 0.0,
            ..SyntheticConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ImageError::Synthetic(m));
        if self.size == 0 || !self.size.is_multiple_of(8) {
            return bad(format!("size {} must be a positive multiple of 8", self.size));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return bad("blur_sigma must be ≥ 0".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be ≥ 0".into());
        }
        if !(1.0 + self.gamma_shift > 0.0 && self.gamma_shift.is_finite()) {
            return bad("gamma_shift must exceed -1".into());
        }
        if self.color_gain.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("color_gain entries must be ≥ 0".into());
        }
        Ok(())
    }
}

/// Smooth gradient background, a few flat shapes and a striped texture,
/// kept inside [0.05, 0.95].
fn scene(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let n = size * size;
    let s = size as f64;
    let mut img = vec![0.0; 3 * n];
    let c0: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
    let c1: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    for y in 0..size {
        for x in 0..size {
            let t = 0.5 + ((x as f64 / s - 0.5) * dx + (y as f64 / s - 0.5) * dy) / std::f64::consts::SQRT_2;
            for c in 0..3 {
                img[c * n + y * size + x] = c0[c] + (c1[c] - c0[c]) * t;
            }
        }
    }
    let shapes = rng.random_range(2..5);
    for _ in 0..shapes {
        let col: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.95));
        let cx = rng.random_range(0.0..s);
        let cy = rng.random_range(0.0..s);
        let r = rng.random_range(s / 8.0..s / 3.0);
        let round = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let (ox, oy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let inside = if round {
                    ox * ox + oy * oy <= r * r
                } else {
                    ox.abs() <= r && oy.abs() <= r * 0.6
                };
                if inside {
                    for c in 0..3 {
                        img[c * n + y * size + x] = col[c];
                    }
                }
            }
        }
    }
    let freq = rng.random_range(0.2..0.8);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let amp = rng.random_range(0.02..0.06);
    for y in 0..size {
        for x in 0..size {
            let v = amp * (freq * (x as f64 * theta.cos() + y as f64 * theta.sin())).sin();
            for c in 0..3 {
                let p = &mut img[c * n + y * size + x];
                *p = (*p + v).clamp(0.05, 0.95);
            }
        }
    }
    img
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur of one size×size plane with reflected borders.
fn blur_plane(p: &mut [f64], size: usize, sigma: f64) {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; p.len()];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * p[y * size + reflect(x as isize + j as isize - r, size)])
                .sum();
        }
    }
    for y in 0..size {
        for x in 0..size {
            p[y * size + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[reflect(y as isize + j as isize - r, size) * size + x])
                .sum();
        }
    }
}

fn to_tensor(v: &[f64], size: usize) -> Tensor<f32> {
    Tensor::from_vec(Shape::new(1, 3, size, size), v.iter().map(|&x| x as f32).collect()).expect("3×size×size")
}

/// Generates `cfg.count` pairs; image `i` depends only on `(seed, i)`.
pub fn synth_generate(cfg: &SyntheticConfig) -> Result<Vec<ImagePair>> {
    cfg.validate()?;
    let n = cfg.size * cfg.size;
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| ImageError::Synthetic(e.to_string()))?;
    (0..cfg.count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let high = scene(&mut rng, cfg.size);
            let mut low = high.clone();
            for c in 0..3 {
                let plane = &mut low[c * n..(c + 1) * n];
                for v in plane.iter_mut() {
                    if cfg.gamma_shift != 0.0 {
                        *v = v.powf(1.0 + cfg.gamma_shift);
                    }
                    *v *= cfg.color_gain[c];
                }
                if cfg.blur_sigma > 0.0 {
                    blur_plane(plane, cfg.size, cfg.blur_sigma);
                }
            }
            if cfg.noise_sigma > 0.0 {
                for v in low.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
            for v in low.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            ImagePair::new(to_tensor(&low, cfg.size), to_tensor(&high, cfg.size))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::rmse;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * h * w).map(|_| rng.random::<f32>()).collect();
        Tensor::from_vec(Shape::new(1, 3, h, w), data).unwrap()
    }

    #[test]
    fn png_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = random_image(13, 21, 1);
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        let worst = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 1.0 / 255.0, "{worst}");
    }

    #[test]
    fn black_image_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("black.png");
        save_png(&Tensor::zeros(Shape::new(1, 3, 4, 4)), &path).unwrap();
        assert!(load_png(&path).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn png_diagnostics_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_png(dir.path().join("nope.png")).unwrap_err();
        assert!(matches!(missing, ImageError::Missing(_)));

        let rgba = dir.path().join("rgba.png");
        let mut enc = png::Encoder::new(BufWriter::new(File::create(&rgba).unwrap()), 2, 2);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(&[7u8; 16]).unwrap();
        w.finish().unwrap();
        let err = load_png(&rgba).unwrap_err();
        assert!(matches!(err, ImageError::ChannelCount { channels: 4, .. }));
        assert!(err.to_string().contains("channels"));

        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not a png at all").unwrap();
        assert!(matches!(load_png(&junk).unwrap_err(), ImageError::Malformed { .. }));
    }

    #[test]
    fn patch_grid_counts() {
        let img = random_image(200, 200, 2);
        let pair = ImagePair::new(img.clone(), img.clone()).unwrap();
        let p = extract_patches(&pair, 100, 100, None).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[3].low, crop(&img, 100, 100, 100));
        let one = extract_patches(&pair, 200, 50, None).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], pair);
        assert!(extract_patches(&pair, 201, 1, None).is_err());
        let a = extract_patches(&pair, 50, 50, Some(9)).unwrap();
        let b = extract_patches(&pair, 50, 50, Some(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, extract_patches(&pair, 50, 50, None).unwrap());
    }

    #[test]
    fn patches_are_aligned() {
        let low = random_image(16, 24, 3);
        let high = low.map(|v| 1.0 - v);
        let pair = ImagePair::new(low, high).unwrap();
        for p in extract_patches(&pair, 8, 4, Some(1)).unwrap() {
            for (a, b) in p.low.data().iter().zip(p.high.data()) {
                assert_eq!(*b, 1.0 - a);
            }
        }
    }

    #[test]
    fn identity_degradation_copies_target() {
        for p in synth_generate(&SyntheticConfig::identity()).unwrap() {
            assert_eq!(p.low, p.high);
        }
    }

    #[test]
    fn noise_level_sets_rmse() {
        let s = 0.05;
        let cfg = SyntheticConfig {
            noise_sigma: s,
            count: 8,
            ..SyntheticConfig::identity()
        };
        for p in synth_generate(&cfg).unwrap() {
            let r = rmse(&p.low, &p.high).unwrap();
            assert!((r - s).abs() <= 0.1 * s, "{r}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = SyntheticConfig::default();
        let a = synth_generate(&cfg).unwrap();
        assert_eq!(a, synth_generate(&cfg).unwrap());
        let other = synth_generate(&SyntheticConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
        let fewer = synth_generate(&SyntheticConfig { count: 3, ..cfg }).unwrap();
        assert_eq!(&a[..3], &fewer[..]);
        assert!(synth_generate(&SyntheticConfig { size: 12, ..SyntheticConfig::default() }).is_err());
    }
}
