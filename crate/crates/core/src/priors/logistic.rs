//! Discretized mixture-of-logistics likelihood over 256 intensity levels.
//!
//! Level `v` covers the interval `[v/255 - 1/510, v/255 + 1/510]` in the unit
//! range; the first and last bins extend to `-∞` and `+∞`. Log-probabilities
//! are evaluated in log space:
//!
//! `log(σ(a) - σ(b)) = log σ(a) + log σ(-b) + log(1 - e^{-(a-b)})`
//!
//! which stays finite and keeps useful gradients even when a value sits many
//! scales away from every component.

use crate::error::{Error, Result};

pub const LEVELS: usize = 256;

/// Half-width of one intensity bin in the unit range.
pub const HALF_BIN: f64 = 1.0 / 510.0;

/// Scales are clamped to at least `1e-7` before use.
pub const LOG_SCALE_MIN: f64 = -16.118_095_650_958_32; // ln(1e-7)

/// Conditional distribution of one sub-pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub log_scales: Vec<f64>,
}

impl MixtureParams {
    pub fn new(logits: Vec<f64>, means: Vec<f64>, log_scales: Vec<f64>) -> Result<Self> {
        if logits.is_empty() || logits.len() != means.len() || means.len() != log_scales.len() {
            return Err(Error::Shape("mixture components disagree in length".into()));
        }
        if logits.iter().chain(&means).chain(&log_scales).any(|v| !v.is_finite()) {
            return Err(Error::Param("mixture parameters must be finite".into()));
        }
        Ok(Self {
            logits,
            means,
            log_scales,
        })
    }

    pub fn components(&self) -> usize {
        self.logits.len()
    }

    /// Normalized mixture weights.
    pub fn weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.logits);
        self.logits.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Probability mass of every level, `0..=255`.
    pub fn level_probs(&self) -> Vec<f64> {
        (0..LEVELS)
            .map(|v| mixture_log_prob(&self.logits, &self.means, &self.log_scales, v as f64 / 255.0).exp())
            .collect()
    }
}

/// Log-probability of the integer level `value` under `params`.
pub fn discretized_logistic_logprob(params: &MixtureParams, value: usize) -> Result<f64> {
    if value >= LEVELS {
        return Err(Error::Param(format!("level {value} outside 0..=255")));
    }
    Ok(mixture_log_prob(
        &params.logits,
        &params.means,
        &params.log_scales,
        value as f64 / 255.0,
    ))
}

/// Continuous relaxation: the bin edges `x ± 1/510` move with `x`.
/// Coincides with [`discretized_logistic_logprob`] at `x = v / 255`.
pub fn relaxed_logprob(params: &MixtureParams, x: f64) -> f64 {
    mixture_log_prob(&params.logits, &params.means, &params.log_scales, x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bin {
    Lowest,
    Interior,
    Highest,
}

fn bin_of(x: f64) -> Bin {
    if x < HALF_BIN {
        Bin::Lowest
    } else if x > 1.0 - HALF_BIN {
        Bin::Highest
    } else {
        Bin::Interior
    }
}

#[inline]
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-mass of one logistic component, and its partials with respect to
/// the upper/lower standardized edges `a`, `b` and the bin width `d = a - b`.
struct Component {
    log_mass: f64,
    /// ∂/∂x (equals -∂/∂μ), already divided by the scale.
    d_x: f64,
    d_log_scale: f64,
}

#[inline]
fn component(x: f64, mean: f64, log_scale: f64) -> Component {
    let clamped = log_scale < LOG_SCALE_MIN;
    let ls = log_scale.max(LOG_SCALE_MIN);
    let inv_s = (-ls).exp();
    let a = (x + HALF_BIN - mean) * inv_s;
    let b = (x - HALF_BIN - mean) * inv_s;
    let (log_mass, da, db) = match bin_of(x) {
        Bin::Lowest => (log_sigmoid(a), sigmoid(-a), 0.0),
        Bin::Highest => (log_sigmoid(-b), 0.0, -sigmoid(b)),
        Bin::Interior => {
            let d = 2.0 * HALF_BIN * inv_s;
            let width_term = (-(-d).exp_m1()).ln();
            let g = 1.0 / d.exp_m1();
            (
                log_sigmoid(a) + log_sigmoid(-b) + width_term,
                sigmoid(-a) + g,
                -sigmoid(b) - g,
            )
        }
    };
    let d_log_scale = if clamped { 0.0 } else { -a * da - b * db };
    Component {
        log_mass,
        d_x: (da + db) * inv_s,
        d_log_scale,
    }
}

pub(crate) fn mixture_log_prob(logits: &[f64], means: &[f64], log_scales: &[f64], x: f64) -> f64 {
    let lse = log_sum_exp(logits);
    let terms: Vec<f64> = (0..logits.len())
        .map(|k| logits[k] - lse + component(x, means[k], log_scales[k]).log_mass)
        .collect();
    log_sum_exp(&terms)
}

/// Gradients of the relaxed log-probability of one sub-pixel.
#[derive(Debug, Clone, Default)]
pub(crate) struct MixtureGrad {
    pub log_prob: f64,
    pub d_logits: Vec<f64>,
    pub d_means: Vec<f64>,
    pub d_log_scales: Vec<f64>,
    pub d_x: f64,
}

pub(crate) fn mixture_log_prob_grad(
    logits: &[f64],
    means: &[f64],
    log_scales: &[f64],
    x: f64,
    out: &mut MixtureGrad,
) {
    let k = logits.len();
    let lse = log_sum_exp(logits);
    let comps: Vec<Component> = (0..k).map(|j| component(x, means[j], log_scales[j])).collect();
    let terms: Vec<f64> = (0..k).map(|j| logits[j] - lse + comps[j].log_mass).collect();
    let lp = log_sum_exp(&terms);
    out.log_prob = lp;
    out.d_logits.resize(k, 0.0);
    out.d_means.resize(k, 0.0);
    out.d_log_scales.resize(k, 0.0);
    out.d_x = 0.0;
    for j in 0..k {
        let resp = (terms[j] - lp).exp();
        let weight = (logits[j] - lse).exp();
        out.d_logits[j] = resp - weight;
        out.d_means[j] = -resp * comps[j].d_x;
        out.d_log_scales[j] = resp * comps[j].d_log_scale;
        out.d_x += resp * comps[j].d_x;
    }
}
