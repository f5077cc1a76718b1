//! Gaussian Markov random field prior with precision `Q = εI + LᵀL`, where
//! `L` stacks horizontal and vertical first differences (free boundary).

use nalgebra::DMatrix;

use super::{check_finite, ImagePrior};
use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMrfPrior {
    epsilon: f64,
}

impl GaussianMrfPrior {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Param(format!("ridge weight must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `Q x` for one row-major plane.
    pub fn apply_precision(&self, plane: &[f64], height: usize, width: usize) -> Vec<f64> {
        let mut out: Vec<f64> = plane.iter().map(|v| self.epsilon * v).collect();
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if x + 1 < width {
                    let d = plane[i] - plane[i + 1];
                    out[i] += d;
                    out[i + 1] -= d;
                }
                if y + 1 < height {
                    let d = plane[i] - plane[i + width];
                    out[i] += d;
                    out[i + width] -= d;
                }
            }
        }
        out
    }

    /// Dense precision matrix for a `height x width` plane.
    pub fn precision_matrix(&self, height: usize, width: usize) -> DMatrix<f64> {
        let n = height * width;
        let mut q = DMatrix::<f64>::identity(n, n) * self.epsilon;
        let mut couple = |i: usize, j: usize| {
            q[(i, i)] += 1.0;
            q[(j, j)] += 1.0;
            q[(i, j)] -= 1.0;
            q[(j, i)] -= 1.0;
        };
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if x + 1 < width {
                    couple(i, i + 1);
                }
                if y + 1 < height {
                    couple(i, i + width);
                }
            }
        }
        q
    }

    /// `½ xᵀQx` summed over channels.
    pub fn energy(&self, image: &Image) -> f64 {
        let (h, w, _) = image.shape();
        image
            .planes()
            .map(|p| {
                let qx = self.apply_precision(p, h, w);
                0.5 * p.iter().zip(&qx).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum()
    }
}

impl ImagePrior for GaussianMrfPrior {
    fn name(&self) -> &str {
        "gaussian_mrf"
    }

    /// `-½ xᵀQx`; the normalizing constant is dropped.
    fn log_density(&self, image: &Image) -> Result<f64> {
        check_finite(image)?;
        Ok(-self.energy(image))
    }

    fn value_and_grad(&self, image: &Image) -> Result<(f64, Image)> {
        check_finite(image)?;
        let (h, w, _) = image.shape();
        let mut grad = image.clone();
        let mut value = 0.0;
        for c in 0..image.channels() {
            let qx = self.apply_precision(image.plane(c), h, w);
            value -= 0.5 * image.plane(c).iter().zip(&qx).map(|(a, b)| a * b).sum::<f64>();
            for (g, q) in grad.plane_mut(c).iter_mut().zip(qx) {
                *g = -q;
            }
        }
        Ok((value, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::Rng;

    #[test]
    fn zero_image() {
        let p = GaussianMrfPrior::new(0.1).unwrap();
        let z = Image::zeros(4, 5, 1);
        assert_eq!(p.log_density(&z).unwrap(), 0.0);
        assert!(p.grad_log_density(&z).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_image_gradient_is_ridge_only() {
        let p = GaussianMrfPrior::new(0.25).unwrap();
        let c = Image::filled(3, 4, 1, 0.6);
        for g in p.grad_log_density(&c).unwrap().data() {
            assert!((g + 0.25 * 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        let p = GaussianMrfPrior::new(0.01).unwrap();
        let mut r = crate::rng::seeded(3);
        let x: Vec<f64> = (0..20).map(|_| r.random()).collect();
        let dense = p.precision_matrix(4, 5) * DVector::from_column_slice(&x);
        let free = p.apply_precision(&x, 4, 5);
        for (a, b) in dense.iter().zip(&free) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn precision_is_positive_definite() {
        let q = GaussianMrfPrior::new(1e-3).unwrap().precision_matrix(3, 3);
        assert!(q.clone().cholesky().is_some());
        assert_eq!(q, q.transpose());
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        assert!(GaussianMrfPrior::new(0.0).is_err());
        assert!(GaussianMrfPrior::new(-1.0).is_err());
    }
}
