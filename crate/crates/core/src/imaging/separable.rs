//! Separable coded-mask (FlatCam-style) lensless model `Y = Φ_L X Φ_Rᵀ`.

use nalgebra::DMatrix;
use rand::Rng;

use super::dense::{per_channel, row_major};
use super::measurement::{Layout, Measurement, MeasurementSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableOperator {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl SeparableOperator {
    /// `left` acts on image rows (its column count is the image height),
    /// `right` on image columns (column count = image width).
    pub fn new(left: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        if left.is_empty() || right.is_empty() {
            return Err(Error::Shape("separable factors must be non-empty".into()));
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// Image shape `(height, width)` the operator accepts.
    pub fn image_shape(&self) -> (usize, usize) {
        (self.left.ncols(), self.right.ncols())
    }

    /// Measurement shape `(rows, cols)`.
    pub fn measurement_shape(&self) -> (usize, usize) {
        (self.left.nrows(), self.right.nrows())
    }

    pub(crate) fn check_image(&self, height: usize, width: usize) -> Result<()> {
        if (height, width) != self.image_shape() {
            return Err(Error::Shape(format!(
                "separable operator expects {:?} images, got {:?}",
                self.image_shape(),
                (height, width)
            )));
        }
        Ok(())
    }

    pub fn forward_plane(&self, plane: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
        self.check_image(height, width)?;
        let x = DMatrix::from_row_slice(height, width, plane);
        Ok(row_major(&(&self.left * x * self.right.transpose())))
    }

    /// `Φ_Lᵀ R Φ_R` for a row-major measurement-shaped `R`.
    pub fn adjoint_plane(&self, meas: &[f64]) -> Vec<f64> {
        let (m, n) = self.measurement_shape();
        let r = DMatrix::from_row_slice(m, n, meas);
        row_major(&(self.left.tr_mul(&r) * &self.right))
    }

    /// Spectral norm of the equivalent dense operator, `‖Φ_L‖₂ ‖Φ_R‖₂`.
    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(&self.left) * spectral_norm(&self.right)
    }

    /// Condition number of the equivalent dense operator restricted to its row space.
    pub fn condition_number(&self) -> f64 {
        condition_number(&self.left) * condition_number(&self.right)
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// First `rows` cyclic shifts of a random ±1 sequence of length `n`, scaled by `1/√n`.
pub fn cyclic_mask_matrix(rows: usize, n: usize, rng_seed: u64) -> Result<DMatrix<f64>> {
    if rows == 0 || n == 0 {
        return Err(Error::Param("mask matrix needs positive dimensions".into()));
    }
    let mut r = rng::seeded(rng_seed);
    let seq: Vec<f64> = (0..n)
        .map(|_| if r.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let scale = 1.0 / (n as f64).sqrt();
    Ok(DMatrix::from_fn(rows, n, |i, j| seq[(j + n - i % n) % n] * scale))
}

/// Simulated separable coded-mask camera for `height x width` scenes with
/// `rows x cols` sensor measurements.
pub fn make_flatcam_operator(
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
    rng_seed: u64,
) -> Result<SeparableOperator> {
    let left = cyclic_mask_matrix(rows, height, rng::derive_seed(rng_seed, 0))?;
    let right = cyclic_mask_matrix(cols, width, rng::derive_seed(rng_seed, 1))?;
    SeparableOperator::new(left, right)
}

/// `Y = Φ_L X Φ_Rᵀ` per channel.
pub fn flatcam_forward(ops: &[SeparableOperator], image: &Image) -> Result<MeasurementSet> {
    let (h, w, ch) = image.shape();
    let mut per = Vec::with_capacity(ch);
    for (c, plane) in image.planes().enumerate() {
        let op = per_channel(ops, ch, c)?;
        let (m, n) = op.measurement_shape();
        per.push(Measurement::new(m, n, op.forward_plane(plane, h, w)?)?);
    }
    Ok(MeasurementSet::new(Layout::Matrix, per))
}
