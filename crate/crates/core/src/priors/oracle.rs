//! Closed-form MAP estimates under the Gaussian MRF prior, by dense solves.
//!
//! Hard: `argmin ½xᵀQx  s.t.  Ax = y` through the KKT system
//! `[Q Aᵀ; A 0] [x; ν] = [0; y]`.
//! Soft: `argmin ½xᵀQx + λ‖y − Ax‖²` through `(Q + 2λAᵀA) x = 2λAᵀy`.

use nalgebra::{DMatrix, DVector};

use super::gmrf::GaussianMrfPrior;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::imaging::Problem;

/// Largest number of unknowns per channel the dense solver accepts.
pub const MAX_UNKNOWNS: usize = 1024;

/// Normwise backward error allowed for the dense solve.
const SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    Hard,
    Soft { weight: f64 },
}

pub fn gaussian_mrf_map_oracle(problem: &Problem, prior: &GaussianMrfPrior, mode: OracleMode) -> Result<Image> {
    let (h, w, ch) = problem.shape();
    let n = h * w;
    if n > MAX_UNKNOWNS {
        return Err(Error::Param(format!(
            "dense oracle handles at most {MAX_UNKNOWNS} unknowns per channel, got {n}"
        )));
    }
    if let OracleMode::Soft { weight } = mode {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Param(format!("soft weight must be positive, got {weight}")));
        }
    }
    let q = prior.precision_matrix(h, w);
    let mut planes = Vec::with_capacity(ch);
    for c in 0..ch {
        let a = problem.model.dense_matrix(c, ch, h, w)?;
        let y = DVector::from_vec(problem.model.dense_measurements(&problem.measurements.per_channel[c]));
        let x = match mode {
            OracleMode::Hard => solve_kkt(&q, &a, &y)?,
            OracleMode::Soft { weight } => solve_normal(&q, &a, &y, weight)?,
        };
        planes.push(x.as_slice().to_vec());
    }
    Image::from_planes(h, w, planes)
}

fn solve_kkt(q: &DMatrix<f64>, a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(q);
    k.view_mut((n, 0), (m, n)).copy_from(a);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    let mut b = DVector::zeros(n + m);
    b.rows_mut(n, m).copy_from(y);
    let z = checked_solve(&k, &b, "KKT")?;
    Ok(z.rows(0, n).into_owned())
}

fn solve_normal(q: &DMatrix<f64>, a: &DMatrix<f64>, y: &DVector<f64>, weight: f64) -> Result<DVector<f64>> {
    let at = a.transpose();
    let lhs = q + (&at * a) * (2.0 * weight);
    let rhs = (&at * y) * (2.0 * weight);
    checked_solve(&lhs, &rhs, "normal-equation")
}

/// LU solve with one round of iterative refinement and a backward-error check.
fn checked_solve(k: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = k.clone().lu();
    let singular = || {
        let sv = k.clone().singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        Error::Numeric(format!(
            "{what} system is singular or ill-conditioned (condition number ≈ {:.3e})",
            if lo > 0.0 { hi / lo } else { f64::INFINITY }
        ))
    };
    let mut z = lu.solve(b).ok_or_else(singular)?;
    if let Some(dz) = lu.solve(&(b - k * &z)) {
        z += dz;
    }
    let backward = (b - k * &z).norm() / (k.norm() * z.norm() + b.norm()).max(f64::MIN_POSITIVE);
    if !z.iter().all(|v| v.is_finite()) || backward > SOLVE_TOL {
        return Err(singular());
    }
    Ok(z)
}
