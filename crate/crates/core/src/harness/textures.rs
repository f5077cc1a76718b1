//! Synthetic texture patches used as a training and evaluation corpus.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::io::save_image;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureGenerator {
    /// Square-wave bands; every row (or every column) is constant.
    Stripes,
    /// Two-level checkerboard with cells of `period / 2` pixels.
    Checker,
    /// Smooth ramp with a gentle bend.
    SmoothGradient,
    /// Flat background with a few sharp-edged discs and rectangles.
    EdgeBlobs,
    /// Each patch drawn from one of the other generators.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTextureSpec {
    pub generator: TextureGenerator,
    #[serde(default = "default_patch")]
    pub patch_size: usize,
    pub count: usize,
    #[serde(default)]
    pub rng_seed: u64,
    /// Checker period in pixels; random in {4, 8} when absent.
    #[serde(default)]
    pub period: Option<usize>,
    /// Standard deviation of i.i.d. Gaussian noise added before quantization.
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_patch() -> usize {
    16
}

impl SyntheticTextureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::config("patch_size", "must be at least 2"));
        }
        if self.count == 0 {
            return Err(Error::config("count", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and non-negative"));
        }
        if let Some(p) = self.period {
            if p < 2 || p % 2 != 0 {
                return Err(Error::config("period", "must be an even number of pixels"));
            }
        }
        Ok(())
    }
}

/// Two clearly different intensities.
fn two_levels(r: &mut rng::Rng) -> (f64, f64) {
    let a: f64 = r.random_range(0.05..0.95);
    let mut b: f64 = r.random_range(0.05..0.95);
    while (a - b).abs() < 0.2 {
        b = r.random_range(0.05..0.95);
    }
    (a, b)
}

fn stripes(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let (a, b) = two_levels(r);
    let band = r.random_range(1..=(n / 4).max(1));
    let offset = r.random_range(0..2 * band);
    let horizontal = r.random::<bool>();
    (0..n * n)
        .map(|i| {
            let t = if horizontal { i / n } else { i % n };
            if ((t + offset) / band) % 2 == 0 {
                a
            } else {
                b
            }
        })
        .collect()
}

fn checker(n: usize, period: Option<usize>, r: &mut rng::Rng) -> Vec<f64> {
    let (a, b) = two_levels(r);
    let cell = period.unwrap_or(if r.random::<bool>() { 4 } else { 8 }) / 2;
    (0..n * n)
        .map(|i| if ((i / n) / cell + (i % n) / cell).is_multiple_of(2) { a } else { b })
        .collect()
}

fn smooth_gradient(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let theta = r.random_range(0.0..std::f64::consts::TAU);
    let (c, s) = (theta.cos(), theta.sin());
    let lo: f64 = r.random_range(0.0..0.5);
    let hi: f64 = r.random_range(lo + 0.2..=1.0);
    let bend: f64 = r.random_range(-0.5..0.5);
    let raw: Vec<f64> = (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 / n as f64 - 0.5, (i % n) as f64 / n as f64 - 0.5);
            let t = c * x + s * y;
            t + bend * (-s * x + c * y).powi(2)
        })
        .collect();
    let (mn, mx) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    raw.iter().map(|v| lo + (hi - lo) * (v - mn) / (mx - mn).max(1e-12)).collect()
}

fn edge_blobs(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let mut data = vec![r.random_range(0.05..0.95); n * n];
    let shapes = r.random_range(1..=3);
    for _ in 0..shapes {
        let v: f64 = r.random_range(0.05..0.95);
        let (cy, cx) = (r.random_range(0.0..n as f64), r.random_range(0.0..n as f64));
        let size = r.random_range(n as f64 / 6.0..n as f64 / 2.5);
        let disc = r.random::<bool>();
        for (i, d) in data.iter_mut().enumerate() {
            let (y, x) = ((i / n) as f64 + 0.5, (i % n) as f64 + 0.5);
            let inside = if disc {
                (y - cy).powi(2) + (x - cx).powi(2) <= size * size
            } else {
                (y - cy).abs() <= size && (x - cx).abs() <= size * 0.7
            };
            if inside {
                *d = v;
            }
        }
    }
    data
}

/// One patch from `generator`, quantized to 8-bit levels.
pub fn texture(generator: TextureGenerator, size: usize, period: Option<usize>, r: &mut rng::Rng) -> Image {
    let data = match generator {
        TextureGenerator::Stripes => stripes(size, r),
        TextureGenerator::Checker => checker(size, period, r),
        TextureGenerator::SmoothGradient => smooth_gradient(size, r),
        TextureGenerator::EdgeBlobs => edge_blobs(size, r),
        TextureGenerator::Mixed => {
            let pick = [
                TextureGenerator::Stripes,
                TextureGenerator::Checker,
                TextureGenerator::SmoothGradient,
                TextureGenerator::EdgeBlobs,
            ][r.random_range(0..4)];
            return texture(pick, size, period, r);
        }
    };
    Image::gray(size, size, data).expect("generator fills every pixel").quantized()
}

/// All patches of `spec`, in order.
pub fn synthesize(spec: &SyntheticTextureSpec) -> Result<Vec<Image>> {
    spec.validate()?;
    let mut r = rng::seeded(spec.rng_seed);
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut img = texture(spec.generator, spec.patch_size, spec.period, &mut r);
        if spec.noise_sigma > 0.0 {
            for v in img.data_mut() {
                let n: f64 = r.sample(StandardNormal);
                *v = (*v + spec.noise_sigma * n).clamp(0.0, 1.0);
            }
            img = img.quantized();
        }
        out.push(img);
    }
    Ok(out)
}

/// Writes `spec.count` PGM patches named `texture_00000.pgm`, ... into `dir`.
pub fn generate_textures(spec: &SyntheticTextureSpec, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(spec.count);
    for (i, img) in synthesize(spec)?.iter().enumerate() {
        let path = dir.join(format!("texture_{i:05}.pgm"));
        save_image(img, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn spec(generator: TextureGenerator, count: usize, seed: u64) -> SyntheticTextureSpec {
        SyntheticTextureSpec {
            generator,
            patch_size: 16,
            count,
            rng_seed: seed,
            period: None,
            noise_sigma: 0.0,
        }
    }

    #[test]
    fn stripes_are_constant_along_one_axis() {
        for img in synthesize(&spec(TextureGenerator::Stripes, 20, 3)).unwrap() {
            let rows = (0..16).all(|y| (0..16).all(|x| img.get(y, x, 0) == img.get(y, 0, 0)));
            let cols = (0..16).all(|x| (0..16).all(|y| img.get(y, x, 0) == img.get(0, x, 0)));
            assert!(rows || cols);
        }
    }

    #[test]
    fn checker_has_two_values() {
        let s = SyntheticTextureSpec {
            period: Some(4),
            ..spec(TextureGenerator::Checker, 5, 1)
        };
        for img in synthesize(&s).unwrap() {
            let values: BTreeSet<u64> = img.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(values.len(), 2);
            assert_ne!(img.get(0, 0, 0), img.get(0, 2, 0));
            assert_eq!(img.get(0, 0, 0), img.get(0, 1, 0));
        }
    }

    #[test]
    fn all_generators_stay_in_range() {
        for g in [
            TextureGenerator::SmoothGradient,
            TextureGenerator::EdgeBlobs,
            TextureGenerator::Mixed,
        ] {
            for img in synthesize(&spec(g, 30, 2)).unwrap() {
                assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
                assert_eq!(img, img.quantized());
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(TextureGenerator::Mixed, 3, 9);
        let a = generate_textures(&s, dir.path().join("a")).unwrap();
        let b = generate_textures(&s, dir.path().join("b")).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
        }
    }

    #[test]
    fn noise_perturbs_but_stays_quantized() {
        let clean = synthesize(&spec(TextureGenerator::Checker, 4, 6)).unwrap();
        let noisy = synthesize(&SyntheticTextureSpec {
            noise_sigma: 0.05,
            ..spec(TextureGenerator::Checker, 4, 6)
        })
        .unwrap();
        assert_eq!(noisy[0], noisy[0].quantized());
        let d = clean[0].distance(&noisy[0]) / 16.0;
        assert!(d > 0.02 && d < 0.08, "{d}");
    }

    #[test]
    fn invalid_spec() {
        assert!(synthesize(&spec(TextureGenerator::Checker, 0, 0)).is_err());
        let bad = SyntheticTextureSpec {
            noise_sigma: -1.0,
            ..spec(TextureGenerator::Checker, 1, 0)
        };
        assert!(synthesize(&bad).is_err());
    }
}
