use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// A column of `rows` values (single-pixel camera).
    Vector,
    /// A `rows x cols` grid, row-major (inpainting, LiSens, FlatCam).
    Matrix,
}

/// Measurements taken from one image channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Measurement {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} measurement values for a {rows}x{cols} layout",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Measurements for every channel of an image, one entry per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub layout: Layout,
    pub per_channel: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn new(layout: Layout, per_channel: Vec<Measurement>) -> Self {
        Self {
            layout,
            per_channel,
        }
    }

    pub fn channels(&self) -> usize {
        self.per_channel.len()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.per_channel.iter().flat_map(|m| m.values.iter())
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.per_channel.iter().map(|m| m.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &MeasurementSet) -> bool {
        self.per_channel.len() == other.per_channel.len()
            && self
                .per_channel
                .iter()
                .zip(&other.per_channel)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub(crate) fn check_same_shape(&self, other: &MeasurementSet) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape("measurement sets differ in shape".into()))
        }
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &MeasurementSet) -> Result<MeasurementSet> {
        self.check_same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub(crate) fn zip_map(&self, other: &MeasurementSet, f: impl Fn(f64, f64) -> f64) -> Self {
        let per_channel = self
            .per_channel
            .iter()
            .zip(&other.per_channel)
            .map(|(a, b)| Measurement {
                rows: a.rows,
                cols: a.cols,
                values: a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect(),
            })
            .collect();
        Self {
            layout: self.layout,
            per_channel,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let per_channel = self
            .per_channel
            .iter()
            .map(|m| Measurement {
                rows: m.rows,
                cols: m.cols,
                values: m.values.iter().map(|&v| f(v)).collect(),
            })
            .collect();
        Self {
            layout: self.layout,
            per_channel,
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }
}
