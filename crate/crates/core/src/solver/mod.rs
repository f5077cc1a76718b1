//! Iterative MAP reconstruction.
//!
//! Every iteration takes a momentum ascent step on the prior log-density
//! (restricted to a random subset of pixels), then enforces the measurements
//! in one of three ways:
//!
//! * `Hard`: exact projection onto `{x : Ax = y}`;
//! * `Alm`: one augmented-Lagrangian gradient step plus a dual update;
//! * `Soft`: one gradient step on the penalty `λ‖y − Ax‖²`;
//!
//! and finally clips the estimate into `[0, 1]`.

pub mod tiling;

use std::collections::VecDeque;
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use tiling::{split, stitch};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imaging::mask::exact_count_mask;
use crate::imaging::{clip_unit_in_place, MeasurementSet, Problem, SensingModel};
use crate::priors::ImagePrior;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    Hard,
    Alm,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Prior step size α.
    pub alpha: f64,
    pub momentum: f64,
    /// Fraction of pixels left out of each prior step.
    pub dropout_ratio: f64,
    pub max_iter: usize,
    pub mode: ConstraintMode,
    /// Augmented-Lagrangian penalty ρ.
    pub rho: f64,
    /// Likelihood weight λ of the soft penalty.
    pub soft_weight: f64,
    /// Primal step size of the augmented-Lagrangian term. Defaults to the
    /// inverse Lipschitz constant of the penalty gradient.
    pub constraint_step: Option<f64>,
    /// Tile side for prior evaluation. Defaults to the prior's native patch size.
    pub tile: Option<usize>,
    pub rng_seed: u64,
    /// Stop once the estimate moves less than `1e-7` (relative) over 20 iterations.
    pub early_stop: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 7.5,
            momentum: 0.9,
            dropout_ratio: 0.25,
            max_iter: 300,
            mode: ConstraintMode::Hard,
            rho: 10.0,
            soft_weight: 1.0,
            constraint_step: None,
            tile: None,
            rng_seed: 0,
            early_stop: false,
        }
    }
}

const EARLY_STOP_WINDOW: usize = 20;
const EARLY_STOP_TOL: f64 = 1e-7;
const DIVERGENCE_WINDOW: usize = 50;
const DIVERGENCE_FACTOR: f64 = 10.0;

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout_ratio) {
            return Err(Error::config("dropout_ratio", "must lie in [0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be at least 1"));
        }
        if self.mode == ConstraintMode::Alm && !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho", "must be positive in alm mode"));
        }
        if self.mode == ConstraintMode::Soft && !(self.soft_weight > 0.0 && self.soft_weight.is_finite()) {
            return Err(Error::config("soft_weight", "must be positive in soft mode"));
        }
        if let Some(s) = self.constraint_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("constraint_step", "must be positive"));
            }
        }
        if self.tile == Some(0) {
            return Err(Error::config("tile", "must be positive"));
        }
        Ok(())
    }
}

/// Dual variable of the augmented Lagrangian, shaped like the measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmState {
    pub dual: MeasurementSet,
}

impl AlmState {
    pub fn new(measurements: &MeasurementSet) -> Self {
        Self {
            dual: measurements.zeros_like(),
        }
    }
}

/// Velocity of the prior ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: Image,
}

impl MomentumState {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            velocity: Image::zeros(height, width, channels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Prior log-density of the iterate the step started from.
    pub log_density: f64,
    /// Relative measurement residual after the clip.
    pub residual: f64,
    /// Relative residual before the clip (hard mode: right after the projection).
    pub pre_clip_residual: f64,
    pub grad_norm: f64,
    /// Penalized objective `−log p(x) + λ‖y − Ax‖²` (soft mode only).
    pub objective: Option<f64>,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub estimate: Image,
    pub trace: Vec<TraceRecord>,
    pub config: SolverConfig,
    pub init_seed: u64,
    pub dropout_seed: u64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub iterations: usize,
    pub stopped_early: bool,
    pub wall_time_s: f64,
}

/// I.i.d. uniform `[0, 1)` image.
pub fn initialize_uniform(height: usize, width: usize, channels: usize, rng_seed: u64) -> Result<Image> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Param("image dimensions must be positive".into()));
    }
    use rand::Rng;
    let mut r = rng::seeded(rng_seed);
    let data = (0..height * width * channels).map(|_| r.random::<f64>()).collect();
    Image::new(height, width, channels, data)
}

/// Binary pixel mask with exactly `round(ratio * h * w)` zeros.
pub fn dropout_mask(height: usize, width: usize, dropout_ratio: f64, rng_seed: u64) -> Result<Vec<u8>> {
    check_ratio(dropout_ratio)?;
    Ok(exact_count_mask(height * width, dropout_ratio, &mut rng::seeded(rng_seed)))
}

fn check_ratio(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Param(format!("dropout ratio {r} outside [0, 1)")));
    }
    Ok(())
}

/// Prior log-density and gradient, evaluated tile by tile when the prior
/// scores fixed-size patches.
pub fn tiled_value_and_grad(prior: &dyn ImagePrior, x: &Image, tile: Option<usize>) -> Result<(f64, Image)> {
    let tile = match (tile, prior.patch_size()) {
        (Some(t), Some(p)) if t != p => {
            return Err(Error::Param(format!(
                "tile {t} differs from the prior's patch size {p}"
            )))
        }
        (Some(t), _) => Some(t),
        (None, p) => p,
    };
    let (value, grad) = match tile {
        Some(t) if !(x.height() == t && x.width() == t) => {
            let mut total = 0.0;
            let mut grads = Vec::new();
            for piece in split(x, t)? {
                let (v, g) = prior.value_and_grad(&piece)?;
                total += v;
                grads.push(g);
            }
            (total, stitch(&grads, x.height(), x.width())?)
        }
        _ => prior.value_and_grad(x)?,
    };
    if !value.is_finite() || !grad.is_finite() {
        return Err(Error::Numeric(format!(
            "prior {} produced a non-finite value or gradient",
            prior.name()
        )));
    }
    Ok((value, grad))
}

struct Ascent {
    h: Image,
    log_density: f64,
    grad_norm: f64,
}

fn ascent(x: &Image, prior: &dyn ImagePrior, cfg: &SolverConfig, mom: &mut MomentumState, mask: &[u8]) -> Result<Ascent> {
    x.check_same_shape(&mom.velocity, "momentum")?;
    if mask.len() != x.plane_len() {
        return Err(Error::Shape(format!(
            "dropout mask has {} entries, image planes have {}",
            mask.len(),
            x.plane_len()
        )));
    }
    let (log_density, grad) = tiled_value_and_grad(prior, x, cfg.tile)?;
    let grad_norm = grad.norm();
    let hw = x.plane_len();
    let mu = cfg.momentum;
    let mut h = x.clone();
    for (i, (v, g)) in mom.velocity.data_mut().iter_mut().zip(grad.data()).enumerate() {
        let keep = mask[i % hw] as f64;
        *v = mu * *v + keep * g;
    }
    for (hv, v) in h.data_mut().iter_mut().zip(mom.velocity.data()) {
        *hv += cfg.alpha * v;
    }
    Ok(Ascent {
        h,
        log_density,
        grad_norm,
    })
}

/// `v ← μv + M∘∇log p(x)`, `H = x + αv`.
pub fn prior_ascent_step(
    x: &Image,
    prior: &dyn ImagePrior,
    cfg: &SolverConfig,
    mom: &mut MomentumState,
    mask: &[u8],
) -> Result<Image> {
    Ok(ascent(x, prior, cfg, mom, mask)?.h)
}

/// Adds i.i.d. `N(0, σ²)` noise to every measurement.
pub fn add_measurement_noise(y: &MeasurementSet, sigma: f64, rng_seed: u64) -> Result<MeasurementSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Param(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(y.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Param(e.to_string()))?;
    let mut r = rng::seeded(rng_seed);
    let mut out = y.clone();
    for m in out.per_channel.iter_mut() {
        for v in m.values.iter_mut() {
            *v += normal.sample(&mut r);
        }
    }
    Ok(out)
}

pub fn solve_hard(problem: &Problem, prior: &dyn ImagePrior, cfg: &SolverConfig) -> Result<ReconstructionReport> {
    reconstruct(problem, prior, &with_mode(cfg, ConstraintMode::Hard), None)
}

pub fn solve_alm(problem: &Problem, prior: &dyn ImagePrior, cfg: &SolverConfig) -> Result<ReconstructionReport> {
    reconstruct(problem, prior, &with_mode(cfg, ConstraintMode::Alm), None)
}

pub fn solve_soft(problem: &Problem, prior: &dyn ImagePrior, cfg: &SolverConfig) -> Result<ReconstructionReport> {
    reconstruct(problem, prior, &with_mode(cfg, ConstraintMode::Soft), None)
}

fn with_mode(cfg: &SolverConfig, mode: ConstraintMode) -> SolverConfig {
    SolverConfig { mode, ..cfg.clone() }
}

/// Primal step of the augmented Lagrangian: `1 / (2ρ‖A‖²)` unless configured.
fn alm_step(problem: &Problem, cfg: &SolverConfig) -> f64 {
    if let Some(s) = cfg.constraint_step {
        return s;
    }
    let norm = problem.model.operator_norm().max(1e-12);
    1.0 / (2.0 * cfg.rho * norm * norm)
}

/// Runs the configured solver; `truth`, when given, adds PSNR to the trace.
pub fn reconstruct(
    problem: &Problem,
    prior: &dyn ImagePrior,
    cfg: &SolverConfig,
    truth: Option<&Image>,
) -> Result<ReconstructionReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (h, w, ch) = problem.shape();
    if let Some(t) = truth {
        if t.shape() != (h, w, ch) {
            return Err(Error::Shape("ground truth does not match the problem shape".into()));
        }
    }
    match cfg.mode {
        ConstraintMode::Hard if !problem.model.supports_projection() => {
            return Err(Error::Contract(format!(
                "the {} operator has no closed-form projection; use alm or soft mode",
                problem.model.name()
            )))
        }
        ConstraintMode::Alm if !matches!(problem.model, SensingModel::FlatCam(_)) => {
            return Err(Error::Contract(
                "the augmented Lagrangian solver targets separable operators".into(),
            ))
        }
        _ => {}
    }

    let init_seed = rng::derive_seed(cfg.rng_seed, 0);
    let dropout_seed = rng::derive_seed(cfg.rng_seed, 1);
    let mut dropout_rng = rng::seeded(dropout_seed);
    let mut x = initialize_uniform(h, w, ch, init_seed)?;
    let mut mom = MomentumState::new(h, w, ch);
    let mut alm = AlmState::new(&problem.measurements);
    let eta = match cfg.mode {
        ConstraintMode::Alm => alm_step(problem, cfg),
        _ => 0.0,
    };
    let y_norm = problem.measurements.norm().max(1e-12);

    let mut residual = problem.residual(&x)?;
    let initial_residual = residual.norm() / y_norm;
    let mut trace: Vec<TraceRecord> = Vec::with_capacity(cfg.max_iter);
    let mut history: VecDeque<Image> = VecDeque::new();
    let mut stopped_early = false;

    for k in 0..cfg.max_iter {
        let mask = exact_count_mask(h * w, cfg.dropout_ratio, &mut dropout_rng);
        let step = ascent(&x, prior, cfg, &mut mom, &mask)?;
        let mut objective = None;
        let mut next = match cfg.mode {
            ConstraintMode::Hard => problem.project(&step.h)?,
            ConstraintMode::Alm => {
                // J = H + η Aᵀ(λ + 2ρ(Y − A X_k))
                let dir = alm.dual.zip_map(&residual, |l, r| l + 2.0 * cfg.rho * r);
                add_scaled(step.h, &problem.adjoint(&dir)?, eta)
            }
            ConstraintMode::Soft => {
                // Gradient step of size α on −λ‖y − Ax‖² at the current iterate.
                let r2 = residual.norm().powi(2);
                let obj = -step.log_density + cfg.soft_weight * r2;
                if !obj.is_finite() {
                    return Err(Error::Numeric(format!("soft objective became non-finite at iteration {k}")));
                }
                objective = Some(obj);
                let back = problem.adjoint(&residual)?;
                add_scaled(step.h, &back, 2.0 * cfg.alpha * cfg.soft_weight)
            }
        };
        if !next.is_finite() {
            return Err(Error::Numeric(format!("estimate became non-finite at iteration {k}")));
        }
        let pre_clip_residual = problem.relative_residual(&next)?;
        clip_unit_in_place(&mut next);
        residual = problem.residual(&next)?;
        let rel = residual.norm() / y_norm;
        if cfg.mode == ConstraintMode::Alm {
            alm.dual = alm.dual.zip_map(&residual, |l, r| l + cfg.rho * r);
            if k >= DIVERGENCE_WINDOW {
                let before = trace[k - DIVERGENCE_WINDOW].residual.max(1e-8);
                if rel > DIVERGENCE_FACTOR * before {
                    return Err(Error::Numeric(format!(
                        "augmented Lagrangian diverged: residual grew from {before:.3e} to {rel:.3e} over {DIVERGENCE_WINDOW} iterations (iteration {k}); reduce rho or the step sizes"
                    )));
                }
            }
        }
        let psnr = match truth {
            Some(t) => Some(crate::metrics::psnr(t, &next)?),
            None => None,
        };
        trace.push(TraceRecord {
            iteration: k,
            log_density: step.log_density,
            residual: rel,
            pre_clip_residual,
            grad_norm: step.grad_norm,
            objective,
            psnr,
        });
        x = next;

        if cfg.early_stop {
            history.push_back(x.clone());
            if history.len() > EARLY_STOP_WINDOW + 1 {
                history.pop_front();
            }
            if history.len() == EARLY_STOP_WINDOW + 1 {
                let old = &history[0];
                if x.distance(old) <= EARLY_STOP_TOL * old.norm().max(1e-12) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let final_residual = problem.relative_residual(&x)?;
    Ok(ReconstructionReport {
        iterations: trace.len(),
        estimate: x,
        trace,
        config: cfg.clone(),
        init_seed,
        dropout_seed,
        initial_residual,
        final_residual,
        stopped_early,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn add_scaled(mut a: Image, b: &Image, s: f64) -> Image {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += s * y;
    }
    a
}

#[cfg(test)]
mod tests;
