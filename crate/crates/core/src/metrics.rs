//! Image quality and density-model metrics.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Image;

/// Side length of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits_per_dim: Option<f64>,
}

/// Writes `inf` for an exact reconstruction, since JSON has no infinity.
pub(crate) fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

pub(crate) fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("not a decibel value: {t}"))),
    }
}

/// PSNR against a peak of 1, averaged over channels. Identical channels give `+∞`.
pub fn psnr(reference: &Image, estimate: &Image) -> Result<f64> {
    reference.check_same_shape(estimate, "psnr")?;
    if reference.is_empty() {
        return Err(Error::Shape("cannot score an empty image".into()));
    }
    let ch = reference.channels();
    let total: f64 = (0..ch)
        .map(|c| {
            let (a, b) = (reference.plane(c), estimate.plane(c));
            let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
            if mse == 0.0 {
                f64::INFINITY
            } else {
                -10.0 * mse.log10()
            }
        })
        .sum();
    Ok(total / ch as f64)
}

/// Mean SSIM over all 8x8 windows (stride 1), averaged over channels.
pub fn ssim(reference: &Image, estimate: &Image) -> Result<f64> {
    reference.check_same_shape(estimate, "ssim")?;
    let (h, w, ch) = reference.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let total: f64 = (0..ch)
        .map(|c| ssim_plane(reference.plane(c), estimate.plane(c), h, w))
        .sum();
    Ok(total / ch as f64)
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let idx = || {
                (y0..y0 + SSIM_WINDOW).flat_map(move |y| (x0..x0 + SSIM_WINDOW).map(move |x| y * w + x))
            };
            let ma = idx().map(|i| a[i]).sum::<f64>() / n;
            let mb = idx().map(|i| b[i]).sum::<f64>() / n;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in idx() {
                let (da, db) = (a[i] - ma, b[i] - mb);
                va += da * da;
                vb += db * db;
                cov += da * db;
            }
            let (va, vb, cov) = (va / n, vb / n, cov / n);
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            windows += 1;
        }
    }
    total / windows as f64
}

/// Converts a total negative log-likelihood in nats to bits per dimension.
pub fn bits_per_dim(total_nll_nats: f64, pixel_count: usize) -> Result<f64> {
    if pixel_count == 0 {
        return Err(Error::Param("pixel count must be positive".into()));
    }
    Ok(total_nll_nats / (pixel_count as f64 * std::f64::consts::LN_2))
}

/// PSNR and SSIM of `estimate` against `reference`.
pub fn evaluate(reference: &Image, estimate: &Image) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(reference, estimate)?,
        ssim: ssim(reference, estimate)?,
        bits_per_dim: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(h: usize, w: usize, seed: u64) -> Image {
        let mut r = crate::rng::seeded(seed);
        Image::gray(h, w, (0..h * w).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = random(8, 8, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let zero = Image::zeros(4, 4, 1);
        let one = Image::filled(4, 4, 1, 1.0);
        assert_eq!(psnr(&zero, &one).unwrap(), 0.0);
        let tenth = Image::filled(4, 4, 1, 0.1);
        assert!((psnr(&zero, &tenth).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(psnr(&Image::zeros(2, 2, 1), &Image::zeros(2, 3, 1)).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random(12, 10, 2);
        let b = random(12, 10, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &b).unwrap() < 0.5);
    }

    #[test]
    fn ssim_constant_offset_is_luminance_only() {
        let a = Image::filled(8, 8, 1, 0.25);
        let b = Image::filled(8, 8, 1, 0.75);
        let mu: f64 = 0.25;
        let expect = (2.0 * mu * (mu + 0.5) + C1) / (mu * mu + (mu + 0.5) * (mu + 0.5) + C1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.6000).abs() < 1e-3);
    }

    #[test]
    fn ssim_small_image_rejected() {
        let a = Image::zeros(7, 9, 1);
        assert!(matches!(ssim(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn bits_per_dim_examples() {
        assert!((bits_per_dim(100.0 * 256f64.ln(), 100).unwrap() - 8.0).abs() < 1e-12);
        assert!((bits_per_dim(7.0 * std::f64::consts::LN_2, 7).unwrap() - 1.0).abs() < 1e-15);
        assert!(bits_per_dim(1.0, 0).is_err());
    }

    #[test]
    fn report_serializes_infinity_as_text() {
        let r = MetricReport {
            psnr_db: f64::INFINITY,
            ssim: 1.0,
            bits_per_dim: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"psnr_db":"inf","ssim":1.0}"#);
        let back: MetricReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
