//! Random pixel dropout for inpainting.

use rand::seq::SliceRandom;

use super::measurement::{Layout, Measurement, MeasurementSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// Binary sampling mask shared by every channel. `1` marks an observed pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskOperator {
    height: usize,
    width: usize,
    mask: Vec<u8>,
}

impl MaskOperator {
    pub fn new(height: usize, width: usize, mask: Vec<u8>) -> Result<Self> {
        if mask.len() != height * width {
            return Err(Error::Shape(format!(
                "mask has {} entries for {height}x{width}",
                mask.len()
            )));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(Error::Param("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.mask
    }

    pub fn observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn zeros(&self) -> usize {
        self.mask.len() - self.observed()
    }

    pub(crate) fn check_image(&self, image: &Image) -> Result<()> {
        if image.height() != self.height || image.width() != self.width {
            return Err(Error::Shape(format!(
                "mask is {}x{}, image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }

    pub(crate) fn apply_plane(&self, plane: &[f64]) -> Vec<f64> {
        plane
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m == 1 { v } else { 0.0 })
            .collect()
    }
}

/// Exact-count binary mask: `round(fraction * len)` zeros at uniformly random positions.
pub(crate) fn exact_count_mask(len: usize, zero_fraction: f64, rng: &mut rng::Rng) -> Vec<u8> {
    let zeros = ((zero_fraction * len as f64).round() as usize).min(len);
    let mut mask = vec![1u8; len];
    mask[..zeros].iter_mut().for_each(|m| *m = 0);
    mask.shuffle(rng);
    mask
}

/// Samples an inpainting mask with exactly `round(missing_fraction * h * w)` missing pixels.
pub fn make_mask(
    height: usize,
    width: usize,
    missing_fraction: f64,
    rng_seed: u64,
) -> Result<MaskOperator> {
    if !(0.0..=1.0).contains(&missing_fraction) {
        return Err(Error::Param(format!(
            "missing fraction {missing_fraction} outside [0, 1]"
        )));
    }
    let mut rng = rng::seeded(rng_seed);
    let mask = exact_count_mask(height * width, missing_fraction, &mut rng);
    MaskOperator::new(height, width, mask)
}

/// Hadamard product `m ∘ x`, kept in image layout.
pub fn apply_mask(image: &Image, mask: &MaskOperator) -> Result<MeasurementSet> {
    mask.check_image(image)?;
    let per_channel = image
        .planes()
        .map(|p| Measurement {
            rows: mask.height,
            cols: mask.width,
            values: mask.apply_plane(p),
        })
        .collect();
    Ok(MeasurementSet::new(Layout::Matrix, per_channel))
}

/// `(1 - m) ∘ h + m ∘ y`: observed pixels are copied from `y`, missing ones kept from `h`.
pub fn project_inpaint(h: &Image, mask: &MaskOperator, y: &MeasurementSet) -> Result<Image> {
    mask.check_image(h)?;
    if y.channels() != h.channels()
        || y.per_channel.iter().any(|m| m.values.len() != h.plane_len())
    {
        return Err(Error::Shape("measurements do not match image".into()));
    }
    let mut out = h.clone();
    for (c, meas) in y.per_channel.iter().enumerate() {
        for ((o, &m), &v) in out.plane_mut(c).iter_mut().zip(&mask.mask).zip(&meas.values) {
            if m == 1 {
                *o = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_extremes() {
        assert!(make_mask(2, 2, 0.0, 3).unwrap().values().iter().all(|&m| m == 1));
        assert!(make_mask(2, 2, 1.0, 3).unwrap().values().iter().all(|&m| m == 0));
    }

    #[test]
    fn mask_exact_count() {
        let m = make_mask(64, 64, 0.8, 11).unwrap();
        assert_eq!(m.zeros(), (0.8f64 * 4096.0).round() as usize);
        assert_eq!(m.zeros(), 3277);
    }

    #[test]
    fn mask_rejects_bad_fraction() {
        assert!(matches!(make_mask(2, 2, 1.5, 0), Err(Error::Param(_))));
        assert!(matches!(make_mask(2, 2, -0.1, 0), Err(Error::Param(_))));
    }

    #[test]
    fn mask_is_deterministic() {
        assert_eq!(make_mask(8, 8, 0.3, 5).unwrap(), make_mask(8, 8, 0.3, 5).unwrap());
        assert_ne!(make_mask(8, 8, 0.5, 5).unwrap(), make_mask(8, 8, 0.5, 6).unwrap());
    }

    #[test]
    fn hadamard_product() {
        let x = Image::gray(1, 2, vec![0.9, 0.1]).unwrap();
        let ones = MaskOperator::new(1, 2, vec![1, 1]).unwrap();
        let zeros = MaskOperator::new(1, 2, vec![0, 0]).unwrap();
        assert_eq!(apply_mask(&x, &ones).unwrap().per_channel[0].values, vec![0.9, 0.1]);
        assert_eq!(apply_mask(&x, &zeros).unwrap().per_channel[0].values, vec![0.0, 0.0]);

        let x = Image::gray(1, 3, vec![0.2, 0.4, 0.6]).unwrap();
        let m = MaskOperator::new(1, 3, vec![1, 0, 1]).unwrap();
        assert_eq!(apply_mask(&x, &m).unwrap().per_channel[0].values, vec![0.2, 0.0, 0.6]);
    }

    #[test]
    fn apply_mask_shape_mismatch() {
        let x = Image::zeros(2, 3, 1);
        let m = MaskOperator::new(3, 2, vec![1; 6]).unwrap();
        assert!(matches!(apply_mask(&x, &m), Err(Error::Shape(_))));
    }

    #[test]
    fn inpaint_projection() {
        let m = MaskOperator::new(1, 4, vec![1, 0, 1, 0]).unwrap();
        let truth = Image::gray(1, 4, vec![0.9, 0.7, 0.1, 0.3]).unwrap();
        let y = apply_mask(&truth, &m).unwrap();
        let h = Image::filled(1, 4, 1, 0.5);
        let j = project_inpaint(&h, &m, &y).unwrap();
        assert_eq!(j.data(), &[0.9, 0.5, 0.1, 0.5]);

        let all = MaskOperator::new(1, 4, vec![1; 4]).unwrap();
        let y = apply_mask(&truth, &all).unwrap();
        assert_eq!(project_inpaint(&h, &all, &y).unwrap(), truth);

        let none = MaskOperator::new(1, 4, vec![0; 4]).unwrap();
        let y = apply_mask(&truth, &none).unwrap();
        assert_eq!(project_inpaint(&h, &none, &y).unwrap(), h);
    }
}
