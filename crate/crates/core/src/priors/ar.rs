//! Causal convolutional autoregressive image model.
//!
//! The density factorizes over sub-pixels in raster order (row by row, and
//! channel by channel within a pixel). Context is gathered by a stack of masked
//! convolutions:
//!
//! * an input layer whose kernel sees only pixels strictly before the current
//!   one (and, for colour images, earlier channels of the current pixel);
//! * residual blocks `h ← h + conv(tanh h) + b` whose kernels may also read the
//!   current position of the feature maps;
//! * a 1x1 head `W tanh(h) + V h + c` producing, per sub-pixel, the logits,
//!   means and log-scales of a discretized logistic mixture.
//!
//! Feature channels are split into one group per image channel so that the
//! head output for channel `c` depends only on channels `< c` of the current
//! pixel. With a single image channel the grouping is trivial.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{self, MixtureGrad, MixtureParams};
use super::{check_finite, ImagePrior};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArConfig {
    pub in_channels: usize,
    pub features: usize,
    /// Number of residual blocks after the input layer.
    pub layers: usize,
    pub first_kernel: usize,
    pub kernel: usize,
    pub mixtures: usize,
    pub patch_size: usize,
    pub levels: usize,
    pub seed: u64,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            features: 16,
            layers: 3,
            first_kernel: 5,
            kernel: 3,
            mixtures: 3,
            patch_size: 16,
            levels: logistic::LEVELS,
            seed: 0,
        }
    }
}

impl ArConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Param(m.to_string()));
        if self.in_channels == 0 {
            return fail("in_channels must be positive");
        }
        if self.features < self.in_channels {
            return fail("need at least one feature channel per image channel");
        }
        if self.first_kernel.is_multiple_of(2) || self.kernel.is_multiple_of(2) || self.first_kernel < 3 || self.kernel == 0 {
            return fail("kernel sizes must be odd (input kernel at least 3)");
        }
        if self.mixtures == 0 {
            return fail("need at least one mixture component");
        }
        if self.patch_size == 0 {
            return fail("patch_size must be positive");
        }
        if self.levels != logistic::LEVELS {
            return fail("only 256 intensity levels are supported");
        }
        Ok(())
    }

    /// Output maps per pixel: logits, means and log-scales for each channel.
    pub fn head_outputs(&self) -> usize {
        self.in_channels * 3 * self.mixtures
    }

    /// Rows above (and columns left/right) of the current pixel the context reaches.
    pub fn receptive_field(&self) -> usize {
        self.first_kernel / 2 + self.layers * (self.kernel / 2)
    }
}

/// Learnable parameters. Weight tensors are `[out][in][ky][kx]` row-major;
/// masked taps are stored as zeros and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct ArParams {
    pub first_w: Vec<f64>,
    pub first_b: Vec<f64>,
    pub block_w: Vec<Vec<f64>>,
    pub block_b: Vec<Vec<f64>>,
    pub head_w: Vec<f64>,
    pub head_skip: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl ArParams {
    pub fn zeros(cfg: &ArConfig) -> Self {
        let (f, c, p) = (cfg.features, cfg.in_channels, cfg.head_outputs());
        let k0 = cfg.first_kernel * cfg.first_kernel;
        let k = cfg.kernel * cfg.kernel;
        Self {
            first_w: vec![0.0; f * c * k0],
            first_b: vec![0.0; f],
            block_w: vec![vec![0.0; f * f * k]; cfg.layers],
            block_b: vec![vec![0.0; f]; cfg.layers],
            head_w: vec![0.0; p * f],
            head_skip: vec![0.0; p * f],
            head_b: vec![0.0; p],
        }
    }

    /// Named tensors with their `(rows, cols)` shape, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Vec<f64>)> {
        let mut out = vec![
            ("first_w".to_string(), &self.first_w),
            ("first_b".to_string(), &self.first_b),
        ];
        for (l, (w, b)) in self.block_w.iter().zip(&self.block_b).enumerate() {
            out.push((format!("block{l}_w"), w));
            out.push((format!("block{l}_b"), b));
        }
        out.push(("head_w".to_string(), &self.head_w));
        out.push(("head_skip".to_string(), &self.head_skip));
        out.push(("head_b".to_string(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.first_w, &mut self.first_b];
        for (w, b) in self.block_w.iter_mut().zip(self.block_b.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_skip);
        out.push(&mut self.head_b);
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ArParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b.1).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Allowed taps of one masked convolution.
#[derive(Debug, Clone)]
struct Taps {
    kernel: usize,
    in_ch: usize,
    out_ch: usize,
    /// Taps strictly before the centre in raster order: `(dy, dx, tap index)`.
    spatial: Vec<(isize, isize, usize)>,
    centre: usize,
    /// `[out][in]`: whether the centre tap is allowed.
    centre_allowed: Vec<bool>,
}

impl Taps {
    fn new(kernel: usize, in_ch: usize, out_ch: usize, allow: impl Fn(usize, usize) -> bool) -> Self {
        let r = (kernel / 2) as isize;
        let mut spatial = Vec::new();
        for ky in 0..kernel {
            for kx in 0..kernel {
                let (dy, dx) = (ky as isize - r, kx as isize - r);
                if dy < 0 || (dy == 0 && dx < 0) {
                    spatial.push((dy, dx, ky * kernel + kx));
                }
            }
        }
        let mut centre_allowed = vec![false; out_ch * in_ch];
        for o in 0..out_ch {
            for i in 0..in_ch {
                centre_allowed[o * in_ch + i] = allow(o, i);
            }
        }
        Self {
            kernel,
            in_ch,
            out_ch,
            spatial,
            centre: (kernel / 2) * kernel + kernel / 2,
            centre_allowed,
        }
    }

    fn kk(&self) -> usize {
        self.kernel * self.kernel
    }

    fn for_each(&self, o: usize, i: usize, mut f: impl FnMut(isize, isize, usize)) {
        for &(dy, dx, t) in &self.spatial {
            f(dy, dx, t);
        }
        if self.centre_allowed[o * self.in_ch + i] {
            f(0, 0, self.centre);
        }
    }

    fn is_allowed(&self, o: usize, i: usize, t: usize) -> bool {
        if t == self.centre {
            self.centre_allowed[o * self.in_ch + i]
        } else {
            self.spatial.iter().any(|s| s.2 == t)
        }
    }

    /// `out[o] = b[o] + Σ_i w[o,i] ⋆ input[i]` with zero padding.
    fn forward(&self, w: &[f64], b: &[f64], input: &[f64], out: &mut [f64], h: usize, wd: usize) {
        let hw = h * wd;
        let kk = self.kk();
        for o in 0..self.out_ch {
            let plane = &mut out[o * hw..(o + 1) * hw];
            plane.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..self.in_ch {
                let inp = &input[i * hw..(i + 1) * hw];
                let base = (o * self.in_ch + i) * kk;
                self.for_each(o, i, |dy, dx, t| {
                    let wt = w[base + t];
                    if wt == 0.0 {
                        return;
                    }
                    let (x0, x1) = col_range(dx, wd);
                    for y in row_start(dy)..h {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * wd + x0..y * wd + x1];
                        let s0 = (sy * wd) as isize + x0 as isize + dx;
                        let src = &inp[s0 as usize..s0 as usize + (x1 - x0)];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                });
            }
        }
    }

    /// Accumulates gradients of a loss given `gout = ∂L/∂out`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        w: &[f64],
        input: &[f64],
        gout: &[f64],
        h: usize,
        wd: usize,
        mut gin: Option<&mut [f64]>,
        mut gw: Option<&mut [f64]>,
        gb: Option<&mut [f64]>,
    ) {
        let hw = h * wd;
        let kk = self.kk();
        if let Some(gb) = gb {
            for o in 0..self.out_ch {
                gb[o] += gout[o * hw..(o + 1) * hw].iter().sum::<f64>();
            }
        }
        for o in 0..self.out_ch {
            let g = &gout[o * hw..(o + 1) * hw];
            for i in 0..self.in_ch {
                let inp = &input[i * hw..(i + 1) * hw];
                let base = (o * self.in_ch + i) * kk;
                self.for_each(o, i, |dy, dx, t| {
                    let (x0, x1) = col_range(dx, wd);
                    let wt = w[base + t];
                    let mut acc = 0.0;
                    for y in row_start(dy)..h {
                        let sy = (y as isize + dy) as usize;
                        let s0 = ((sy * wd) as isize + x0 as isize + dx) as usize;
                        let gr = &g[y * wd + x0..y * wd + x1];
                        if gw.is_some() {
                            let src = &inp[s0..s0 + (x1 - x0)];
                            acc += gr.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        }
                        if let Some(gin) = gin.as_deref_mut() {
                            if wt != 0.0 {
                                let dst = &mut gin[i * hw + s0..i * hw + s0 + (x1 - x0)];
                                for (d, s) in dst.iter_mut().zip(gr) {
                                    *d += wt * s;
                                }
                            }
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        gw[base + t] += acc;
                    }
                });
            }
        }
    }
}

#[inline]
fn row_start(dy: isize) -> usize {
    (-dy).max(0) as usize
}

#[inline]
fn col_range(dx: isize, wd: usize) -> (usize, usize) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (wd as isize - dx.max(0)).max(x0 as isize) as usize;
    (x0, x1)
}

/// Group of feature channel `f` when `features` maps are split across `channels` image channels.
fn group(f: usize, features: usize, channels: usize) -> usize {
    f * channels / features
}

/// Trained or freshly initialized autoregressive prior.
#[derive(Debug, Clone)]
pub struct ArPriorModel {
    config: ArConfig,
    params: ArParams,
    first: Taps,
    blocks: Taps,
    /// `[head output][feature]`: whether the head may read the feature.
    head_allowed: Vec<bool>,
}

/// Intermediate activations of one forward pass.
struct Forward {
    input: Vec<f64>,
    streams: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    out: Vec<f64>,
}

/// Per-pixel gradient buffers reused across calls.
pub(crate) struct Backward {
    pub log_density: f64,
    pub d_image: Vec<f64>,
    pub d_params: Option<ArParams>,
}

/// Centre of the input intensity range; the network sees `x - INPUT_OFFSET`.
const INPUT_OFFSET: f64 = 0.5;

impl ArPriorModel {
    /// Builds a model with seeded random weights.
    pub fn new(config: ArConfig) -> Result<Self> {
        config.validate()?;
        let mut model = Self::with_params(config.clone(), ArParams::zeros(&config))?;
        let mut r = rng::seeded(config.seed);
        let (f, c, k) = (config.features, config.in_channels, config.mixtures);

        let a0 = 1.0 / ((c * config.first_kernel * config.first_kernel) as f64).sqrt();
        init_masked(&mut model.params.first_w, &model.first, a0, &mut r);
        let ab = 1.0 / ((f * config.kernel * config.kernel) as f64).sqrt();
        for l in 0..config.layers {
            init_masked(&mut model.params.block_w[l], &model.blocks, ab, &mut r);
        }
        let ah = 1.0 / (f as f64).sqrt();
        let p = config.head_outputs();
        for o in 0..p {
            for i in 0..f {
                if model.head_allowed[o * f + i] {
                    model.params.head_w[o * f + i] = r.random_range(-ah..=ah);
                    model.params.head_skip[o * f + i] = r.random_range(-ah..=ah);
                }
            }
        }
        // Components spread evenly over [0, 1] with a shared broad scale
        // give a near-uniform starting conditional.
        for ch in 0..c {
            let base = ch * 3 * k;
            for j in 0..k {
                model.params.head_b[base + j] = 0.0;
                model.params.head_b[base + k + j] = (j as f64 + 0.5) / k as f64;
                model.params.head_b[base + 2 * k + j] = (INIT_SCALE / k as f64).ln();
            }
        }
        Ok(model)
    }

    /// Wraps existing parameters; masked taps are forced to zero.
    pub fn with_params(config: ArConfig, mut params: ArParams) -> Result<Self> {
        config.validate()?;
        let expect = ArParams::zeros(&config);
        for ((name, a), (_, b)) in params.tensors().iter().zip(expect.tensors()) {
            if a.len() != b.len() {
                return Err(Error::Shape(format!(
                    "parameter {name} has {} values, expected {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        if params.block_w.len() != config.layers {
            return Err(Error::Shape("block count does not match config".into()));
        }
        let (f, c) = (config.features, config.in_channels);
        let first = Taps::new(config.first_kernel, c, f, |o, i| i < group(o, f, c));
        let blocks = Taps::new(config.kernel, f, f, |o, i| group(i, f, c) <= group(o, f, c));
        let p = config.head_outputs();
        let per_channel = 3 * config.mixtures;
        let head_allowed = (0..p * f)
            .map(|idx| group(idx % f, f, c) <= (idx / f) / per_channel)
            .collect();
        zero_masked(&mut params.first_w, &first);
        for w in params.block_w.iter_mut() {
            zero_masked(w, &blocks);
        }
        let mut model = Self {
            config,
            params,
            first,
            blocks,
            head_allowed,
        };
        let allowed = model.head_allowed.clone();
        for (w, ok) in model.params.head_w.iter_mut().zip(&allowed) {
            if !ok {
                *w = 0.0;
            }
        }
        for (w, ok) in model.params.head_skip.iter_mut().zip(&allowed) {
            if !ok {
                *w = 0.0;
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ArConfig {
        &self.config
    }

    pub fn params(&self) -> &ArParams {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ArParams {
        &mut self.params
    }

    /// Zeroes the gradient entries of masked taps so optimizers never move them.
    pub(crate) fn mask_gradient(&self, g: &mut ArParams) {
        zero_masked(&mut g.first_w, &self.first);
        for w in g.block_w.iter_mut() {
            zero_masked(w, &self.blocks);
        }
        for (v, ok) in g.head_w.iter_mut().zip(&self.head_allowed) {
            if !ok {
                *v = 0.0;
            }
        }
        for (v, ok) in g.head_skip.iter_mut().zip(&self.head_allowed) {
            if !ok {
                *v = 0.0;
            }
        }
    }

    pub(crate) fn check_input(&self, image: &Image) -> Result<()> {
        let p = self.config.patch_size;
        if image.height() != p || image.width() != p || image.channels() != self.config.in_channels {
            return Err(Error::Param(format!(
                "model scores {p}x{p}x{} patches, got {:?}",
                self.config.in_channels,
                image.shape()
            )));
        }
        Ok(())
    }

    fn forward(&self, image: &Image) -> Forward {
        let (h, w, _) = image.shape();
        let hw = h * w;
        let f = self.config.features;
        let input: Vec<f64> = image.data().iter().map(|v| v - INPUT_OFFSET).collect();
        let mut streams = Vec::with_capacity(self.config.layers + 1);
        let mut acts = Vec::with_capacity(self.config.layers + 1);

        let mut h0 = vec![0.0; f * hw];
        self.first
            .forward(&self.params.first_w, &self.params.first_b, &input, &mut h0, h, w);
        let mut a0 = h0.clone();
        a0.iter_mut().for_each(|v| *v = v.tanh());
        streams.push(h0);
        acts.push(a0);

        let mut conv = vec![0.0; f * hw];
        for l in 0..self.config.layers {
            self.blocks.forward(
                &self.params.block_w[l],
                &self.params.block_b[l],
                &acts[l],
                &mut conv,
                h,
                w,
            );
            let next: Vec<f64> = streams[l].iter().zip(&conv).map(|(a, b)| a + b).collect();
            let act: Vec<f64> = next.iter().map(|v| v.tanh()).collect();
            streams.push(next);
            acts.push(act);
        }

        let p = self.config.head_outputs();
        let top = &streams[self.config.layers];
        let top_act = &acts[self.config.layers];
        let mut out = vec![0.0; p * hw];
        for o in 0..p {
            let dst = &mut out[o * hw..(o + 1) * hw];
            dst.iter_mut().for_each(|v| *v = self.params.head_b[o]);
            for i in 0..f {
                let (wa, ws) = (self.params.head_w[o * f + i], self.params.head_skip[o * f + i]);
                if wa == 0.0 && ws == 0.0 {
                    continue;
                }
                let (a, s) = (&top_act[i * hw..(i + 1) * hw], &top[i * hw..(i + 1) * hw]);
                for ((d, x), y) in dst.iter_mut().zip(a).zip(s) {
                    *d += wa * x + ws * y;
                }
            }
        }
        Forward {
            input,
            streams,
            acts,
            out,
        }
    }

    /// Mixture parameters of sub-pixel `(pixel, channel)` from the head output.
    fn mixture_slices(&self, out: &[f64], hw: usize, pixel: usize, ch: usize, buf: &mut [Vec<f64>; 3]) {
        let k = self.config.mixtures;
        let base = ch * 3 * k;
        for (part, dst) in buf.iter_mut().enumerate() {
            dst.clear();
            dst.extend((0..k).map(|j| out[(base + part * k + j) * hw + pixel]));
        }
    }

    /// Relaxed log-density and gradients. Parameter gradients are only
    /// accumulated when `with_params` is set.
    pub(crate) fn backward(&self, image: &Image, with_params: bool) -> Backward {
        let (h, w, ch) = image.shape();
        let hw = h * w;
        let f = self.config.features;
        let k = self.config.mixtures;
        let p = self.config.head_outputs();
        let fw = self.forward(image);

        let mut d_out = vec![0.0; p * hw];
        let mut d_image = vec![0.0; ch * hw];
        let mut total = 0.0;
        let mut buf: [Vec<f64>; 3] = Default::default();
        let mut g = MixtureGrad::default();
        for c in 0..ch {
            let base = c * 3 * k;
            for pix in 0..hw {
                self.mixture_slices(&fw.out, hw, pix, c, &mut buf);
                let x = image.data()[c * hw + pix];
                logistic::mixture_log_prob_grad(&buf[0], &buf[1], &buf[2], x, &mut g);
                total += g.log_prob;
                d_image[c * hw + pix] += g.d_x;
                for j in 0..k {
                    d_out[(base + j) * hw + pix] = g.d_logits[j];
                    d_out[(base + k + j) * hw + pix] = g.d_means[j];
                    d_out[(base + 2 * k + j) * hw + pix] = g.d_log_scales[j];
                }
            }
        }

        let mut grads = with_params.then(|| ArParams::zeros(&self.config));
        let layers = self.config.layers;
        let top = &fw.streams[layers];
        let top_act = &fw.acts[layers];

        // Head.
        let mut d_stream = vec![0.0; f * hw];
        let mut d_act = vec![0.0; f * hw];
        for o in 0..p {
            let g_o = &d_out[o * hw..(o + 1) * hw];
            if let Some(gr) = grads.as_mut() {
                gr.head_b[o] += g_o.iter().sum::<f64>();
            }
            for i in 0..f {
                if !self.head_allowed[o * f + i] {
                    continue;
                }
                let (wa, ws) = (self.params.head_w[o * f + i], self.params.head_skip[o * f + i]);
                let (a, s) = (&top_act[i * hw..(i + 1) * hw], &top[i * hw..(i + 1) * hw]);
                if let Some(gr) = grads.as_mut() {
                    gr.head_w[o * f + i] += g_o.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
                    gr.head_skip[o * f + i] += g_o.iter().zip(s).map(|(x, y)| x * y).sum::<f64>();
                }
                let da = &mut d_act[i * hw..(i + 1) * hw];
                for (d, gv) in da.iter_mut().zip(g_o) {
                    *d += wa * gv;
                }
                let ds = &mut d_stream[i * hw..(i + 1) * hw];
                for (d, gv) in ds.iter_mut().zip(g_o) {
                    *d += ws * gv;
                }
            }
        }
        add_tanh_grad(&mut d_stream, &d_act, top_act);

        // Residual blocks, top to bottom.
        for l in (0..layers).rev() {
            d_act.iter_mut().for_each(|v| *v = 0.0);
            let (gw, gb) = match grads.as_mut() {
                Some(gr) => (Some(gr.block_w[l].as_mut_slice()), Some(gr.block_b[l].as_mut_slice())),
                None => (None, None),
            };
            self.blocks.backward(
                &self.params.block_w[l],
                &fw.acts[l],
                &d_stream,
                h,
                w,
                Some(&mut d_act),
                gw,
                gb,
            );
            add_tanh_grad(&mut d_stream, &d_act, &fw.acts[l]);
        }

        // Input layer.
        let (gw, gb) = match grads.as_mut() {
            Some(gr) => (Some(gr.first_w.as_mut_slice()), Some(gr.first_b.as_mut_slice())),
            None => (None, None),
        };
        self.first.backward(
            &self.params.first_w,
            &fw.input,
            &d_stream,
            h,
            w,
            Some(&mut d_image),
            gw,
            gb,
        );

        Backward {
            log_density: total,
            d_image,
            d_params: grads,
        }
    }

    /// Relaxed log-density of an arbitrary-size image (no patch-size check).
    pub(crate) fn relaxed_log_density(&self, image: &Image) -> f64 {
        let (h, w, ch) = image.shape();
        let hw = h * w;
        let fw = self.forward(image);
        let mut buf: [Vec<f64>; 3] = Default::default();
        let mut total = 0.0;
        for c in 0..ch {
            for pix in 0..hw {
                self.mixture_slices(&fw.out, hw, pix, c, &mut buf);
                total += logistic::mixture_log_prob(&buf[0], &buf[1], &buf[2], image.data()[c * hw + pix]);
            }
        }
        total
    }

    /// Conditionals of every sub-pixel in raster order (pixel-major, channel-minor).
    pub fn conditionals(&self, image: &Image) -> Result<Vec<MixtureParams>> {
        self.check_input(image)?;
        check_finite(image)?;
        let (h, w, ch) = image.shape();
        let hw = h * w;
        let fw = self.forward(image);
        let mut buf: [Vec<f64>; 3] = Default::default();
        let mut out = Vec::with_capacity(hw * ch);
        for pix in 0..hw {
            for c in 0..ch {
                self.mixture_slices(&fw.out, hw, pix, c, &mut buf);
                out.push(MixtureParams {
                    logits: buf[0].clone(),
                    means: buf[1].clone(),
                    log_scales: buf[2].clone(),
                });
            }
        }
        Ok(out)
    }

    /// Mean negative log-likelihood per sub-pixel (nats) of quantized `images`.
    pub fn mean_nll(&self, images: &[Image]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for img in images {
            total -= self.log_density(img)?;
            count += img.len();
        }
        if count == 0 {
            return Err(Error::Param("no pixels to score".into()));
        }
        Ok(total / count as f64)
    }
}

/// Scale of each initial mixture component relative to `1 / mixtures`.
const INIT_SCALE: f64 = 0.2;

fn add_tanh_grad(d_stream: &mut [f64], d_act: &[f64], act: &[f64]) {
    for ((d, da), a) in d_stream.iter_mut().zip(d_act).zip(act) {
        *d += da * (1.0 - a * a);
    }
}

fn init_masked(w: &mut [f64], taps: &Taps, a: f64, r: &mut rng::Rng) {
    let kk = taps.kk();
    for o in 0..taps.out_ch {
        for i in 0..taps.in_ch {
            for t in 0..kk {
                let idx = (o * taps.in_ch + i) * kk + t;
                w[idx] = if taps.is_allowed(o, i, t) {
                    r.random_range(-a..=a)
                } else {
                    0.0
                };
            }
        }
    }
}

fn zero_masked(w: &mut [f64], taps: &Taps) {
    let kk = taps.kk();
    for o in 0..taps.out_ch {
        for i in 0..taps.in_ch {
            for t in 0..kk {
                if !taps.is_allowed(o, i, t) {
                    w[(o * taps.in_ch + i) * kk + t] = 0.0;
                }
            }
        }
    }
}

impl ImagePrior for ArPriorModel {
    fn name(&self) -> &str {
        "autoregressive"
    }

    fn patch_size(&self) -> Option<usize> {
        Some(self.config.patch_size)
    }

    /// Sum of discrete log-probabilities at the levels `round(255 x)`.
    fn log_density(&self, image: &Image) -> Result<f64> {
        self.check_input(image)?;
        check_finite(image)?;
        Ok(self.relaxed_log_density(&image.quantized()))
    }

    fn value_and_grad(&self, image: &Image) -> Result<(f64, Image)> {
        self.check_input(image)?;
        check_finite(image)?;
        let b = self.backward(image, false);
        let (h, w, c) = image.shape();
        Ok((b.log_density, Image::new(h, w, c, b.d_image)?))
    }

    fn surrogate_log_density(&self, image: &Image) -> Result<f64> {
        self.check_input(image)?;
        check_finite(image)?;
        Ok(self.relaxed_log_density(image))
    }
}

/// Per-pixel conditionals of `image` under `model`.
pub fn ar_conditional(model: &ArPriorModel, image: &Image) -> Result<Vec<MixtureParams>> {
    model.conditionals(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, patch: usize) -> ArPriorModel {
        ArPriorModel::new(ArConfig {
            features: 8,
            layers: 2,
            patch_size: patch,
            seed,
            ..ArConfig::default()
        })
        .unwrap()
    }

    fn random_image(h: usize, c: usize, seed: u64) -> Image {
        let mut r = rng::seeded(seed);
        Image::new(h, h, c, (0..h * h * c).map(|_| r.random_range(0.05..0.95)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_bias_only_conditionals() {
        let cfg = ArConfig {
            patch_size: 5,
            ..ArConfig::default()
        };
        let mut params = ArParams::zeros(&cfg);
        params.head_b = (0..cfg.head_outputs()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let m = ArPriorModel::with_params(cfg, params).unwrap();
        let cond = m.conditionals(&random_image(5, 1, 1)).unwrap();
        assert!(cond.iter().all(|c| *c == cond[0]));
    }

    #[test]
    fn causal_in_raster_order() {
        let m = small(3, 6);
        let img = random_image(6, 1, 2);
        let base = m.conditionals(&img).unwrap();
        for i in [0usize, 7, 20, 35] {
            let mut pert = img.clone();
            pert.data_mut()[i] = 1.0 - pert.data()[i];
            let after = m.conditionals(&pert).unwrap();
            for j in 0..=i {
                assert_eq!(base[j], after[j], "pixel {j} changed after perturbing {i}");
            }
            if i + 1 < 36 {
                assert!((i + 1..36).any(|j| base[j] != after[j]));
            }
        }
    }

    #[test]
    fn colour_sub_pixel_causality() {
        let m = ArPriorModel::new(ArConfig {
            in_channels: 3,
            features: 9,
            layers: 2,
            patch_size: 4,
            seed: 5,
            ..ArConfig::default()
        })
        .unwrap();
        let img = random_image(4, 3, 9);
        let base = m.conditionals(&img).unwrap();
        for pix in [0usize, 5, 15] {
            for c in 0..3 {
                let mut pert = img.clone();
                let idx = c * 16 + pix;
                pert.data_mut()[idx] += 0.3;
                let after = m.conditionals(&pert).unwrap();
                let order = pix * 3 + c;
                for j in 0..=order {
                    assert_eq!(base[j], after[j]);
                }
            }
        }
    }

    #[test]
    fn rejects_wrong_shape() {
        let m = small(0, 4);
        assert!(matches!(m.conditionals(&Image::zeros(5, 5, 1)), Err(Error::Param(_))));
        assert!(matches!(m.log_density(&Image::zeros(4, 4, 3)), Err(Error::Param(_))));
    }

    #[test]
    fn log_density_matches_relaxed_on_levels() {
        let m = small(4, 4);
        let img = random_image(4, 1, 3).quantized();
        let a = m.log_density(&img).unwrap();
        let b = m.surrogate_log_density(&img).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let m = small(7, 4);
        let img = random_image(4, 1, 8);
        let g = m.backward(&img, true).d_params.unwrap();
        let eps = 1e-6;
        let names = m.params().tensors().into_iter().map(|(n, _)| n).collect::<Vec<_>>();
        for (t, name) in names.iter().enumerate() {
            let len = m.params().tensors()[t].1.len();
            for idx in (0..len).step_by((len / 5).max(1)) {
                let mut up = m.clone();
                up.params_mut().tensors_mut()[t][idx] += eps;
                let mut dn = m.clone();
                dn.params_mut().tensors_mut()[t][idx] -= eps;
                let fd = (up.relaxed_log_density(&img) - dn.relaxed_log_density(&img)) / (2.0 * eps);
                let an = g.tensors()[t].1[idx];
                let allowed = an != 0.0 || fd.abs() < 1e-6;
                assert!(allowed, "{name}[{idx}]");
                if an != 0.0 {
                    assert!((fd - an).abs() < 1e-5 * (1.0 + fd.abs()), "{name}[{idx}]: fd {fd} vs {an}");
                }
            }
        }
    }
}
