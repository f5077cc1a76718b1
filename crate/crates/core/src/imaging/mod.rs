//! Forward models, measurement simulation and measurement-consistency projections.

pub mod container;
pub mod dense;
pub mod mask;
pub mod measurement;
pub mod separable;

use nalgebra::DMatrix;

pub use container::{load_calibration, load_matrix, save_calibration, save_matrix};
pub use dense::{
    lisens_forward, make_lisens_operator, make_spc_operator, orthonormality_error, project_lisens,
    project_spc, spc_forward, DenseSensingOperator, RowSensingOperator,
};
pub use mask::{apply_mask, make_mask, project_inpaint, MaskOperator};
pub use measurement::{Layout, Measurement, MeasurementSet};
pub use separable::{flatcam_forward, make_flatcam_operator, SeparableOperator};

use crate::error::{Error, Result};
use crate::image::Image;

/// Elementwise clamp into `[0, 1]`.
pub fn clip_unit(image: &Image) -> Image {
    image.map(|v| v.clamp(0.0, 1.0))
}

pub(crate) fn clip_unit_in_place(image: &mut Image) {
    image.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// The linear forward map of one of the supported cameras, one operator per
/// channel (or a single operator shared by all channels).
#[derive(Debug, Clone)]
pub enum SensingModel {
    Inpaint(MaskOperator),
    Spc(Vec<DenseSensingOperator>),
    LiSens(Vec<RowSensingOperator>),
    FlatCam(Vec<SeparableOperator>),
}

impl SensingModel {
    pub fn name(&self) -> &'static str {
        match self {
            SensingModel::Inpaint(_) => "inpaint",
            SensingModel::Spc(_) => "spc",
            SensingModel::LiSens(_) => "lisens",
            SensingModel::FlatCam(_) => "flatcam",
        }
    }

    pub fn forward(&self, image: &Image) -> Result<MeasurementSet> {
        match self {
            SensingModel::Inpaint(m) => apply_mask(image, m),
            SensingModel::Spc(ops) => spc_forward(ops, image),
            SensingModel::LiSens(ops) => lisens_forward(ops, image),
            SensingModel::FlatCam(ops) => flatcam_forward(ops, image),
        }
    }

    /// Applies the adjoint operator to `r`, producing an image of the given shape.
    pub fn adjoint(&self, r: &MeasurementSet, height: usize, width: usize) -> Result<Image> {
        let ch = r.channels();
        let mut planes = Vec::with_capacity(ch);
        for (c, meas) in r.per_channel.iter().enumerate() {
            let plane = match self {
                SensingModel::Inpaint(m) => m.apply_plane(&meas.values),
                SensingModel::Spc(ops) => dense::per_channel(ops, ch, c)?.adjoint_plane(&meas.values),
                SensingModel::LiSens(ops) => {
                    dense::per_channel(ops, ch, c)?.adjoint_plane(&meas.values, width)
                }
                SensingModel::FlatCam(ops) => dense::per_channel(ops, ch, c)?.adjoint_plane(&meas.values),
            };
            planes.push(plane);
        }
        Image::from_planes(height, width, planes)
    }

    /// Largest singular value of the operator over all channels.
    pub fn operator_norm(&self) -> f64 {
        let dense_norm = |m: &DMatrix<f64>| m.clone().singular_values().max();
        match self {
            SensingModel::Inpaint(_) => 1.0,
            SensingModel::Spc(ops) => ops.iter().map(|o| dense_norm(o.matrix())).fold(0.0, f64::max),
            SensingModel::LiSens(ops) => ops.iter().map(|o| dense_norm(o.matrix())).fold(0.0, f64::max),
            SensingModel::FlatCam(ops) => ops.iter().map(|o| o.spectral_norm()).fold(0.0, f64::max),
        }
    }

    /// Whether a closed-form projection onto `{x : Ax = y}` is available.
    pub fn supports_projection(&self) -> bool {
        match self {
            SensingModel::Inpaint(_) => true,
            SensingModel::Spc(ops) => ops.iter().all(|o| o.row_orthonormal()),
            SensingModel::LiSens(ops) => ops.iter().all(|o| o.row_orthonormal()),
            SensingModel::FlatCam(_) => false,
        }
    }

    pub fn project(&self, h: &Image, y: &MeasurementSet) -> Result<Image> {
        match self {
            SensingModel::Inpaint(m) => project_inpaint(h, m, y),
            SensingModel::Spc(ops) => project_spc(h, ops, y),
            SensingModel::LiSens(ops) => project_lisens(h, ops, y),
            SensingModel::FlatCam(_) => Err(Error::Contract(
                "separable operators have no closed-form projection; use the augmented Lagrangian solver".into(),
            )),
        }
    }

    /// Dense matrix acting on the row-major rasterization of channel `c`.
    pub fn dense_matrix(&self, c: usize, channels: usize, height: usize, width: usize) -> Result<DMatrix<f64>> {
        let n = height * width;
        Ok(match self {
            SensingModel::Inpaint(m) => {
                let observed: Vec<usize> = m
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(i, _)| i)
                    .collect();
                let mut a = DMatrix::zeros(observed.len(), n);
                for (r, &i) in observed.iter().enumerate() {
                    a[(r, i)] = 1.0;
                }
                a
            }
            SensingModel::Spc(ops) => dense::per_channel(ops, channels, c)?.matrix().clone(),
            SensingModel::LiSens(ops) => {
                let phi = dense::per_channel(ops, channels, c)?.matrix();
                // (Φ X)[a, j] = Σ_i Φ[a, i] X[i, j]
                let m = phi.nrows();
                DMatrix::from_fn(m * width, n, |row, col| {
                    let (a, j) = (row / width, row % width);
                    let (i, jj) = (col / width, col % width);
                    if j == jj {
                        phi[(a, i)]
                    } else {
                        0.0
                    }
                })
            }
            SensingModel::FlatCam(ops) => {
                let op = dense::per_channel(ops, channels, c)?;
                op.left().kronecker(op.right())
            }
        })
    }

    /// Measurement values of channel `c` matching [`Self::dense_matrix`] rows.
    pub fn dense_measurements(&self, y: &Measurement) -> Vec<f64> {
        match self {
            SensingModel::Inpaint(m) => y
                .values
                .iter()
                .zip(m.values())
                .filter(|(_, &k)| k == 1)
                .map(|(&v, _)| v)
                .collect(),
            _ => y.values.clone(),
        }
    }
}

/// A reconstruction problem: forward model, observed measurements and target shape.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: SensingModel,
    pub measurements: MeasurementSet,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Problem {
    pub fn new(
        model: SensingModel,
        measurements: MeasurementSet,
        height: usize,
        width: usize,
        channels: usize,
    ) -> Result<Self> {
        let probe = model.forward(&Image::zeros(height, width, channels))?;
        if !probe.same_shape(&measurements) {
            return Err(Error::Shape(format!(
                "measurements do not match the {} operator for a {height}x{width}x{channels} image",
                model.name()
            )));
        }
        Ok(Self {
            model,
            measurements,
            height,
            width,
            channels,
        })
    }

    /// Simulates noiseless measurements of `truth`.
    pub fn simulate(model: SensingModel, truth: &Image) -> Result<Self> {
        let y = model.forward(truth)?;
        Self::new(model, y, truth.height(), truth.width(), truth.channels())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// `y - A x`.
    pub fn residual(&self, x: &Image) -> Result<MeasurementSet> {
        self.measurements.sub(&self.model.forward(x)?)
    }

    /// `‖A x - y‖ / max(‖y‖, 1e-12)`.
    pub fn relative_residual(&self, x: &Image) -> Result<f64> {
        Ok(self.residual(x)?.norm() / self.measurements.norm().max(1e-12))
    }

    pub fn adjoint(&self, r: &MeasurementSet) -> Result<Image> {
        self.model.adjoint(r, self.height, self.width)
    }

    pub fn project(&self, h: &Image) -> Result<Image> {
        self.model.project(h, &self.measurements)
    }
}
