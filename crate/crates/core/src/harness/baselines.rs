//! Reference reconstructions that need no trained prior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imaging::{clip_unit, Problem, SensingModel};
use crate::priors::{gaussian_mrf_map_oracle, GaussianMrfPrior, OracleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Observed pixels kept, missing ones set to zero (inpainting only).
    ZeroFill,
    /// Minimum-norm solution of `Ax = y`.
    LeastNorm,
    /// Exact MAP under the Gaussian MRF prior with hard constraints.
    GaussianMrf,
}

impl Baseline {
    pub fn label(self) -> &'static str {
        match self {
            Baseline::ZeroFill => "zero_fill",
            Baseline::LeastNorm => "least_norm",
            Baseline::GaussianMrf => "gaussian_mrf",
        }
    }

    /// Baselines that make sense for the problem's operator.
    pub fn applicable(model: &SensingModel) -> Vec<Baseline> {
        match model {
            SensingModel::Inpaint(_) => vec![Baseline::ZeroFill, Baseline::GaussianMrf],
            _ => vec![Baseline::LeastNorm, Baseline::GaussianMrf],
        }
    }

    /// Runs the baseline; estimates are clipped into `[0, 1]`.
    pub fn run(self, problem: &Problem, gmrf_epsilon: f64) -> Result<Image> {
        match self {
            Baseline::ZeroFill => zero_fill(problem),
            Baseline::LeastNorm => least_norm(problem),
            Baseline::GaussianMrf => gaussian_mrf_map(problem, gmrf_epsilon),
        }
    }
}

pub fn zero_fill(problem: &Problem) -> Result<Image> {
    match problem.model {
        SensingModel::Inpaint(_) => Ok(clip_unit(&problem.adjoint(&problem.measurements)?)),
        _ => Err(Error::Contract("zero-fill applies to inpainting only".into())),
    }
}

/// `Aᵀy` for operators with orthonormal rows, `Φ_L⁺ Y Φ_R⁺ᵀ` for separable ones.
pub fn least_norm(problem: &Problem) -> Result<Image> {
    let raw = match &problem.model {
        SensingModel::FlatCam(ops) => {
            let (h, w, ch) = problem.shape();
            let mut planes = Vec::with_capacity(ch);
            for c in 0..ch {
                let op = if ops.len() == 1 { &ops[0] } else { &ops[c] };
                let pinv = |m: &nalgebra::DMatrix<f64>| {
                    m.clone()
                        .pseudo_inverse(1e-12)
                        .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))
                };
                let (lp, rp) = (pinv(op.left())?, pinv(op.right())?);
                let meas = &problem.measurements.per_channel[c];
                let y = nalgebra::DMatrix::from_row_slice(meas.rows, meas.cols, &meas.values);
                let x = lp * y * rp.transpose();
                planes.push((0..h * w).map(|i| x[(i / w, i % w)]).collect());
            }
            Image::from_planes(h, w, planes)?
        }
        model if model.supports_projection() => problem.adjoint(&problem.measurements)?,
        _ => {
            return Err(Error::Contract(
                "least-norm baseline needs orthonormal rows or a separable operator".into(),
            ))
        }
    };
    Ok(clip_unit(&raw))
}

pub fn gaussian_mrf_map(problem: &Problem, epsilon: f64) -> Result<Image> {
    let prior = GaussianMrfPrior::new(epsilon)?;
    Ok(clip_unit(&gaussian_mrf_map_oracle(problem, &prior, OracleMode::Hard)?))
}
