//! Multiplexing operators with an explicit matrix: the single-pixel camera
//! (`y = Φ vec(X)`) and the line-sensor camera (`Y = Φ X`).

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::measurement::{Layout, Measurement, MeasurementSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// Largest tolerated `|ΦΦᵀ - I|` entry for an operator flagged row-orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Max absolute entry of `ΦΦᵀ - I`.
pub fn orthonormality_error(matrix: &DMatrix<f64>) -> f64 {
    let gram = matrix * matrix.transpose();
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// i.i.d. standard-normal `rows x cols` matrix with orthonormalized rows.
pub(crate) fn orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    if rows > cols {
        return Err(Error::Param(format!(
            "{rows} orthonormal rows cannot fit in dimension {cols}"
        )));
    }
    if rows == 0 {
        return Err(Error::Param("operator needs at least one row".into()));
    }
    let mut rng = rng::seeded(seed);
    // Draw row by row so the stream order matches the row-major layout.
    let mut g = DMatrix::<f64>::zeros(cols, rows);
    for r in 0..rows {
        for c in 0..cols {
            g[(c, r)] = StandardNormal.sample(&mut rng);
        }
    }
    // Columns of Q span the same space as the Gaussian rows.
    let q = g.qr().q();
    Ok(q.transpose())
}

fn check_orthonormal(matrix: &DMatrix<f64>, row_orthonormal: bool) -> Result<()> {
    if matrix.nrows() > matrix.ncols() {
        return Err(Error::Param(format!(
            "operator has more rows ({}) than columns ({})",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if row_orthonormal {
        let err = orthonormality_error(matrix);
        if err > ORTHONORMAL_TOL {
            return Err(Error::Contract(format!(
                "rows flagged orthonormal but max |ΦΦᵀ - I| = {err:e}"
            )));
        }
    }
    Ok(())
}

/// Single-pixel camera operator acting on the row-major rasterization of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSensingOperator {
    matrix: DMatrix<f64>,
    row_orthonormal: bool,
}

impl DenseSensingOperator {
    /// Wraps `matrix`; when `row_orthonormal` is set the flag is verified.
    pub fn new(matrix: DMatrix<f64>, row_orthonormal: bool) -> Result<Self> {
        check_orthonormal(&matrix, row_orthonormal)?;
        Ok(Self {
            matrix,
            row_orthonormal,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_orthonormal(&self) -> bool {
        self.row_orthonormal
    }

    pub fn forward_plane(&self, plane: &[f64]) -> Result<Vec<f64>> {
        if plane.len() != self.cols() {
            return Err(Error::Shape(format!(
                "operator expects {} pixels, got {}",
                self.cols(),
                plane.len()
            )));
        }
        let x = DVector::from_column_slice(plane);
        Ok((&self.matrix * x).as_slice().to_vec())
    }

    pub fn adjoint_plane(&self, meas: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(meas);
        self.matrix.tr_mul(&r).as_slice().to_vec()
    }

    /// `h - Φᵀ(Φh - y)` on a single plane.
    pub fn project_plane(&self, h: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if !self.row_orthonormal {
            return Err(Error::Contract(
                "hard projection needs a row-orthonormal operator".into(),
            ));
        }
        if y.len() != self.rows() {
            return Err(Error::Shape(format!(
                "expected {} measurements, got {}",
                self.rows(),
                y.len()
            )));
        }
        let ax = self.forward_plane(h)?;
        let r: Vec<f64> = ax.iter().zip(y).map(|(a, b)| a - b).collect();
        let corr = self.adjoint_plane(&r);
        Ok(h.iter().zip(corr).map(|(a, b)| a - b).collect())
    }
}

/// Random Gaussian operator with orthonormal rows, `measurements x pixels`.
pub fn make_spc_operator(
    measurements: usize,
    pixels: usize,
    rng_seed: u64,
) -> Result<DenseSensingOperator> {
    let matrix = orthonormal_rows(measurements, pixels, rng_seed)?;
    Ok(DenseSensingOperator {
        matrix,
        row_orthonormal: true,
    })
}

/// Picks the operator for channel `c`: one per channel, or a single shared one.
pub(crate) fn per_channel<T>(ops: &[T], channels: usize, c: usize) -> Result<&T> {
    match ops.len() {
        1 => Ok(&ops[0]),
        n if n == channels => Ok(&ops[c]),
        n => Err(Error::Shape(format!(
            "{n} operators for a {channels}-channel image"
        ))),
    }
}

/// `y = Φ vec(X)` per channel.
pub fn spc_forward(ops: &[DenseSensingOperator], image: &Image) -> Result<MeasurementSet> {
    let mut per = Vec::with_capacity(image.channels());
    for (c, plane) in image.planes().enumerate() {
        let op = per_channel(ops, image.channels(), c)?;
        per.push(Measurement::vector(op.forward_plane(plane)?));
    }
    Ok(MeasurementSet::new(Layout::Vector, per))
}

/// Hard projection onto `{x : Φx = y}` for row-orthonormal `Φ`.
pub fn project_spc(h: &Image, ops: &[DenseSensingOperator], y: &MeasurementSet) -> Result<Image> {
    if y.channels() != h.channels() {
        return Err(Error::Shape("measurement/image channel count differs".into()));
    }
    let mut out = h.clone();
    for c in 0..h.channels() {
        let op = per_channel(ops, h.channels(), c)?;
        let j = op.project_plane(h.plane(c), &y.per_channel[c].values)?;
        out.plane_mut(c).copy_from_slice(&j);
    }
    Ok(out)
}

/// Line-sensor operator `Y = Φ X`, mixing the rows of each channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSensingOperator {
    matrix: DMatrix<f64>,
    row_orthonormal: bool,
}

impl RowSensingOperator {
    pub fn new(matrix: DMatrix<f64>, row_orthonormal: bool) -> Result<Self> {
        check_orthonormal(&matrix, row_orthonormal)?;
        Ok(Self {
            matrix,
            row_orthonormal,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row_orthonormal(&self) -> bool {
        self.row_orthonormal
    }

    /// `Φ X` for a row-major `height x width` plane; returns row-major `rows x width`.
    pub fn forward_plane(&self, plane: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
        if height != self.cols() || plane.len() != height * width {
            return Err(Error::Shape(format!(
                "operator expects {} image rows, got {height}",
                self.cols()
            )));
        }
        let x = DMatrix::from_row_slice(height, width, plane);
        Ok(row_major(&(&self.matrix * x)))
    }

    pub fn adjoint_plane(&self, meas: &[f64], width: usize) -> Vec<f64> {
        let r = DMatrix::from_row_slice(self.rows(), width, meas);
        row_major(&self.matrix.tr_mul(&r))
    }

    pub fn project_plane(&self, h: &[f64], y: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
        if !self.row_orthonormal {
            return Err(Error::Contract(
                "hard projection needs a row-orthonormal operator".into(),
            ));
        }
        if y.len() != self.rows() * width {
            return Err(Error::Shape("measurement shape does not match operator".into()));
        }
        let ax = self.forward_plane(h, height, width)?;
        let r: Vec<f64> = ax.iter().zip(y).map(|(a, b)| a - b).collect();
        let corr = self.adjoint_plane(&r, width);
        Ok(h.iter().zip(corr).map(|(a, b)| a - b).collect())
    }
}

/// Gaussian line-sensor operator with orthonormal rows, `measurements x height`.
pub fn make_lisens_operator(
    measurements: usize,
    height: usize,
    rng_seed: u64,
) -> Result<RowSensingOperator> {
    let matrix = orthonormal_rows(measurements, height, rng_seed)?;
    Ok(RowSensingOperator {
        matrix,
        row_orthonormal: true,
    })
}

/// `Y = Φ X` per channel.
pub fn lisens_forward(ops: &[RowSensingOperator], image: &Image) -> Result<MeasurementSet> {
    let (h, w, ch) = image.shape();
    let mut per = Vec::with_capacity(ch);
    for (c, plane) in image.planes().enumerate() {
        let op = per_channel(ops, ch, c)?;
        per.push(Measurement::new(op.rows(), w, op.forward_plane(plane, h, w)?)?);
    }
    Ok(MeasurementSet::new(Layout::Matrix, per))
}

/// `J = H - Φᵀ(ΦH - Y)` per channel.
pub fn project_lisens(h: &Image, ops: &[RowSensingOperator], y: &MeasurementSet) -> Result<Image> {
    let (height, width, ch) = h.shape();
    if y.channels() != ch {
        return Err(Error::Shape("measurement/image channel count differs".into()));
    }
    let mut out = h.clone();
    for c in 0..ch {
        let op = per_channel(ops, ch, c)?;
        let j = op.project_plane(h.plane(c), &y.per_channel[c].values, height, width)?;
        out.plane_mut(c).copy_from_slice(&j);
    }
    Ok(out)
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_plane(n: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut r = rng::seeded(seed);
        (0..n).map(|_| r.random::<f64>()).collect()
    }

    #[test]
    fn single_row_is_unit_norm() {
        let op = make_spc_operator(1, 4, 9).unwrap();
        assert!((op.matrix().row(0).norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ten_percent_rate_rows_are_orthonormal() {
        let op = make_spc_operator(409, 4096, 1).unwrap();
        assert_eq!(op.rows(), 409);
        assert!(orthonormality_error(op.matrix()) <= 1e-10);
    }

    #[test]
    fn square_operator_is_orthogonal() {
        let op = make_spc_operator(4, 4, 2).unwrap();
        let x = random_plane(4, 3);
        let back = op.adjoint_plane(&op.forward_plane(&x).unwrap());
        let err: f64 = back.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-10);
    }

    #[test]
    fn too_many_rows_rejected() {
        assert!(matches!(make_spc_operator(5, 4, 0), Err(Error::Param(_))));
    }

    #[test]
    fn spc_forward_examples() {
        let sel = DenseSensingOperator::new(DMatrix::from_row_slice(1, 4, &[1., 0., 0., 0.]), true).unwrap();
        let x = Image::gray(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(spc_forward(&[sel], &x).unwrap().per_channel[0].values, vec![0.1]);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let avg = DenseSensingOperator::new(DMatrix::from_row_slice(1, 4, &[s, s, 0., 0.]), true).unwrap();
        let e1 = Image::gray(2, 2, vec![1., 0., 0., 0.]).unwrap();
        let y = spc_forward(&[avg], &e1).unwrap();
        assert!((y.per_channel[0].values[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);

        let id = DenseSensingOperator::new(DMatrix::identity(4, 4), true).unwrap();
        assert_eq!(spc_forward(&[id], &x).unwrap().per_channel[0].values, x.data());
    }

    #[test]
    fn spc_dimension_mismatch() {
        let op = make_spc_operator(2, 9, 0).unwrap();
        let x = Image::zeros(2, 2, 1);
        assert!(matches!(spc_forward(&[op], &x), Err(Error::Shape(_))));
    }

    #[test]
    fn spc_projection_hand_example() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let op = DenseSensingOperator::new(DMatrix::from_row_slice(1, 4, &[s, s, 0., 0.]), true).unwrap();
        let y = MeasurementSet::new(Layout::Vector, vec![Measurement::vector(vec![s])]);
        let h = Image::gray(2, 2, vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let j = project_spc(&h, std::slice::from_ref(&op), &y).unwrap();
        let expect = [0.4, 0.6, 0.6, 0.8];
        for (a, b) in j.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let again = project_spc(&j, &[op], &y).unwrap();
        assert!(again.distance(&j) <= 1e-12);
    }

    #[test]
    fn projection_requires_orthonormal_flag() {
        let op = DenseSensingOperator::new(DMatrix::from_row_slice(1, 2, &[2., 0.]), false).unwrap();
        let y = MeasurementSet::new(Layout::Vector, vec![Measurement::vector(vec![1.0])]);
        let h = Image::zeros(1, 2, 1);
        assert!(matches!(project_spc(&h, &[op], &y), Err(Error::Contract(_))));
    }

    #[test]
    fn false_orthonormal_flag_rejected() {
        let m = DMatrix::from_row_slice(1, 2, &[2., 0.]);
        assert!(matches!(DenseSensingOperator::new(m, true), Err(Error::Contract(_))));
    }

    #[test]
    fn lisens_forward_examples() {
        let x = Image::gray(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let id = RowSensingOperator::new(DMatrix::identity(2, 2), true).unwrap();
        assert_eq!(lisens_forward(&[id], &x).unwrap().per_channel[0].values, x.data());

        let sum = RowSensingOperator::new(DMatrix::from_row_slice(1, 2, &[1., 1.]), false).unwrap();
        let y = lisens_forward(&[sum], &x).unwrap();
        assert_eq!(y.per_channel[0].shape(), (1, 2));
        assert_eq!(y.per_channel[0].values, vec![4., 6.]);

        let eye = Image::gray(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let op = RowSensingOperator::new(DMatrix::from_row_slice(1, 2, &[0.6, 0.8]), true).unwrap();
        let y = lisens_forward(&[op], &eye).unwrap();
        assert!((y.per_channel[0].values[0] - 0.6).abs() < 1e-15);
        assert!((y.per_channel[0].values[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn lisens_projection_selector() {
        let op = RowSensingOperator::new(DMatrix::from_row_slice(1, 2, &[1., 0.]), true).unwrap();
        let y = MeasurementSet::new(Layout::Matrix, vec![Measurement::new(1, 2, vec![0.9, 0.1]).unwrap()]);
        let h = Image::gray(2, 2, vec![0.5, 0.5, 0.3, 0.3]).unwrap();
        let j = project_lisens(&h, std::slice::from_ref(&op), &y).unwrap();
        for (a, b) in j.data().iter().zip([0.9, 0.1, 0.3, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        let again = project_lisens(&j, &[op], &y).unwrap();
        assert!(again.distance(&j) < 1e-15);
    }

    #[test]
    fn lisens_feasible_input_unchanged() {
        let op = make_lisens_operator(3, 6, 4).unwrap();
        let x = Image::gray(6, 5, random_plane(30, 8)).unwrap();
        let y = lisens_forward(std::slice::from_ref(&op), &x).unwrap();
        let j = project_lisens(&x, &[op], &y).unwrap();
        assert!(j.distance(&x) <= 1e-12);
    }

    #[test]
    fn operators_deterministic_per_seed() {
        assert_eq!(make_spc_operator(5, 16, 3).unwrap(), make_spc_operator(5, 16, 3).unwrap());
        assert_ne!(make_spc_operator(5, 16, 3).unwrap(), make_spc_operator(5, 16, 4).unwrap());
    }
}
