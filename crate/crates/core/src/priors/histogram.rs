//! Independent-pixel baseline: one 256-level histogram shared by every pixel.

use super::logistic::LEVELS;
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramModel {
    log_probs: Vec<f64>,
}

impl HistogramModel {
    /// Fits level frequencies with add-one smoothing so unseen levels keep
    /// nonzero mass.
    pub fn fit(images: &[Image]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Param("cannot fit a histogram to an empty dataset".into()));
        }
        let mut counts = vec![1.0f64; LEVELS];
        for img in images {
            for level in img.levels() {
                counts[level as usize] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        Ok(Self {
            log_probs: counts.iter().map(|c| (c / total).ln()).collect(),
        })
    }

    pub fn log_prob(&self, level: u8) -> f64 {
        self.log_probs[level as usize]
    }

    /// Total negative log-likelihood in nats and the number of scored values.
    pub fn nll(&self, images: &[Image]) -> (f64, usize) {
        let mut total = 0.0;
        let mut count = 0;
        for img in images {
            for level in img.levels() {
                total -= self.log_probs[level as usize];
                count += 1;
            }
        }
        (total, count)
    }

    pub fn bits_per_dim(&self, images: &[Image]) -> Result<f64> {
        let (nll, count) = self.nll(images);
        crate::metrics::bits_per_dim(nll, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_normalize() {
        let img = Image::gray(2, 2, vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        let h = HistogramModel::fit(&[img]).unwrap();
        let total: f64 = (0..=255u8).map(|v| h.log_prob(v).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_is_cheap() {
        let imgs: Vec<Image> = (0..200).map(|_| Image::filled(8, 8, 1, 0.4)).collect();
        let h = HistogramModel::fit(&imgs).unwrap();
        assert!(h.bits_per_dim(&imgs).unwrap() < 0.1);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(HistogramModel::fit(&[]).is_err());
    }
}
