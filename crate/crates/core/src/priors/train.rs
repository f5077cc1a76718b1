//! Maximum-likelihood training of the autoregressive prior with Adam.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ar::{ArConfig, ArParams, ArPriorModel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ArConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate at the last step relative to the first (cosine schedule).
    pub final_lr_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Fraction of patches held out for evaluation and model selection.
    pub holdout_fraction: f64,
    /// Global gradient-norm cap per batch (per-dimension loss scale).
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ArConfig::default(),
            epochs: 15,
            batch_size: 16,
            learning_rate: 3e-3,
            final_lr_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            holdout_fraction: 0.1,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs", "epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::config("final_lr_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1", "Adam decay rates must lie in [0, 1)"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::config("holdout_fraction", "must lie in (0, 1)"));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::config("clip_norm", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_patches: usize,
    pub holdout_patches: usize,
    /// Held-out bits/dim of the initial model.
    pub initial_bits_per_dim: f64,
    /// Held-out bits/dim of the returned model.
    pub final_bits_per_dim: f64,
    /// Held-out bits/dim after each epoch.
    pub epoch_bits_per_dim: Vec<f64>,
    /// Mean per-dimension training NLL (nats) of every batch, in order.
    pub loss_trace: Vec<f64>,
    /// Epoch whose parameters were returned (0 means the initial model).
    pub best_epoch: usize,
}

struct Adam {
    m: ArParams,
    v: ArParams,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut ArParams, grad: &ArParams, cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let ps = params.tensors_mut();
        let gs = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, (_, g)), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
            }
        }
    }
}

/// Splits `dataset` into train and held-out parts with a seeded shuffle.
pub fn holdout_split(dataset: &[Image], fraction: f64, seed: u64) -> (Vec<Image>, Vec<Image>) {
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut rng::seeded(rng::derive_seed(seed, 1)));
    let held = ((dataset.len() as f64 * fraction).round() as usize).clamp(1, dataset.len() - 1);
    let holdout = idx[..held].iter().map(|&i| dataset[i].clone()).collect();
    let train = idx[held..].iter().map(|&i| dataset[i].clone()).collect();
    (train, holdout)
}

fn bits(model: &ArPriorModel, images: &[Image]) -> Result<f64> {
    Ok(model.mean_nll(images)? / std::f64::consts::LN_2)
}

/// Trains a fresh model on quantized copies of `dataset`.
///
/// Parameters are evaluated on the held-out split after every epoch and the
/// best epoch is returned, so the result never scores worse than the
/// initialization on that split.
pub fn train_ar_prior(dataset: &[Image], config: &TrainConfig, seed: u64) -> Result<(ArPriorModel, TrainReport)> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::Param("training needs at least two patches (one is held out)".into()));
    }
    let p = config.model.patch_size;
    let ch = config.model.in_channels;
    for img in dataset {
        if img.shape() != (p, p, ch) {
            return Err(Error::Param(format!(
                "training patches must be {p}x{p}x{ch}, got {:?}",
                img.shape()
            )));
        }
        if !img.is_finite() {
            return Err(Error::Param("training patch contains non-finite values".into()));
        }
    }
    let quantized: Vec<Image> = dataset.iter().map(|i| i.quantized()).collect();
    let (train, holdout) = holdout_split(&quantized, config.holdout_fraction, seed);

    let mut arch = config.model.clone();
    arch.seed = rng::derive_seed(seed, 2);
    let mut model = ArPriorModel::new(arch.clone())?;
    let initial = bits(&model, &holdout)?;
    let mut best = (initial, 0usize, model.params().clone());

    let mut adam = Adam {
        m: ArParams::zeros(&arch),
        v: ArParams::zeros(&arch),
        t: 0,
    };
    let mut order_rng = rng::seeded(rng::derive_seed(seed, 3));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_trace = Vec::new();
    let mut epoch_bits = Vec::with_capacity(config.epochs);
    let dims_per_patch = (p * p * ch) as f64;
    let total_steps = (config.epochs * train.len().div_ceil(config.batch_size)) as f64;
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = ArParams::zeros(&arch);
            let mut loss = 0.0;
            for &i in batch {
                let out = model.backward(&train[i], true);
                loss -= out.log_density;
                grad.add_scaled(out.d_params.as_ref().expect("parameter gradients requested"), 1.0);
            }
            let scale = -1.0 / (batch.len() as f64 * dims_per_patch);
            let mut g = ArParams::zeros(&arch);
            g.add_scaled(&grad, scale);
            model.mask_gradient(&mut g);
            let mean_loss = loss / (batch.len() as f64 * dims_per_patch);
            if !mean_loss.is_finite() || !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "training loss became non-finite at epoch {epoch}, batch {b} (loss {mean_loss})"
                )));
            }
            let norm = g
                .tensors()
                .iter()
                .flat_map(|(_, t)| t.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > config.clip_norm {
                let mut clipped = ArParams::zeros(&arch);
                clipped.add_scaled(&g, config.clip_norm / norm);
                g = clipped;
            }
            let progress = step as f64 / (total_steps - 1.0).max(1.0);
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            let lr = config.learning_rate * (config.final_lr_fraction + (1.0 - config.final_lr_fraction) * cosine);
            adam.step(model.params_mut(), &g, config, lr);
            step += 1;
            loss_trace.push(mean_loss);
        }
        let held = bits(&model, &holdout)?;
        if !held.is_finite() {
            return Err(Error::Numeric(format!("held-out NLL became non-finite at epoch {epoch}")));
        }
        epoch_bits.push(held);
        if held < best.0 {
            best = (held, epoch, model.params().clone());
        }
    }

    let (final_bits, best_epoch, params) = best;
    let model = ArPriorModel::with_params(arch, params)?;
    Ok((
        model,
        TrainReport {
            train_patches: train.len(),
            holdout_patches: holdout.len(),
            initial_bits_per_dim: initial,
            final_bits_per_dim: final_bits,
            epoch_bits_per_dim: epoch_bits,
            loss_trace,
            best_epoch,
        },
    ))
}
