//! Config-driven experiments: simulate measurements, reconstruct, score.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::baselines::Baseline;
use super::io::{load_image, save_image};
use super::table::{compare_table, RowLabel};
use super::textures::{synthesize, SyntheticTextureSpec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::imaging::{
    make_flatcam_operator, make_lisens_operator, make_mask, make_spc_operator, Problem, SensingModel,
};
use crate::metrics::{self, MetricReport};
use crate::priors::checkpoint::load_checkpoint;
use crate::priors::{GaussianMrfPrior, ImagePrior, UniformPrior};
use crate::rng;
use crate::solver::{add_measurement_noise, reconstruct, ConstraintMode, SolverConfig, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Inpaint,
    Spc,
    Lisens,
    Flatcam,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Inpaint => "inpaint",
            Task::Spc => "spc",
            Task::Lisens => "lisens",
            Task::Flatcam => "flatcam",
        }
    }
}

/// A scalar or a list in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Fraction of measurements to pixels; a list expands into a grid.
    #[serde(default)]
    pub measurement_rate: Option<OneOrMany>,
    /// Inpainting only: fraction of missing pixels (alternative to the rate).
    #[serde(default)]
    pub missing_fraction: Option<OneOrMany>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Solver dropout ratios to sweep; overrides `solver.dropout_ratio`.
    #[serde(default)]
    pub dropout_ratios: Option<Vec<f64>>,
    /// `uniform`, `gaussian_mrf` or `ar:<checkpoint path>`.
    #[serde(default = "default_prior")]
    pub prior: String,
    #[serde(default = "default_epsilon")]
    pub gmrf_epsilon: f64,
    #[serde(default)]
    pub images: Vec<PathBuf>,
    /// Synthetic ground truths, used in addition to `images`.
    #[serde(default)]
    pub textures: Option<SyntheticTextureSpec>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub baselines: bool,
    /// Write reconstructed images next to the metrics.
    #[serde(default = "yes")]
    pub save_images: bool,
}

fn default_prior() -> String {
    "uniform".into()
}

fn default_epsilon() -> f64 {
    1e-3
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into());
            Error::config(field, msg)
        })
    }

    /// Measurement rates of the grid.
    pub fn rates(&self) -> Vec<f64> {
        match (&self.measurement_rate, &self.missing_fraction) {
            (Some(r), _) => r.values(),
            (None, Some(m)) => m.values().iter().map(|f| 1.0 - f).collect(),
            (None, None) => vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measurement_rate.is_some() && self.missing_fraction.is_some() {
            return Err(Error::config("missing_fraction", "give either measurement_rate or missing_fraction"));
        }
        if self.missing_fraction.is_some() && self.task != Task::Inpaint {
            return Err(Error::config("missing_fraction", "only applies to the inpaint task"));
        }
        if let Some(m) = &self.missing_fraction {
            if m.values().iter().any(|f| !(0.0..1.0).contains(f)) {
                return Err(Error::config("missing_fraction", "must lie in [0, 1)"));
            }
        }
        let rates = self.rates();
        if rates.is_empty() {
            return Err(Error::config("measurement_rate", "missing"));
        }
        if rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::config("measurement_rate", "must lie in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be non-negative"));
        }
        self.solver.validate()?;
        if let Some(d) = &self.dropout_ratios {
            if d.is_empty() || d.iter().any(|r| !(0.0..1.0).contains(r)) {
                return Err(Error::config("dropout_ratios", "must be a nonempty list in [0, 1)"));
            }
        }
        if self.task == Task::Flatcam && self.solver.mode == ConstraintMode::Hard {
            return Err(Error::config("solver.mode", "flatcam needs mode \"alm\" or \"soft\""));
        }
        if self.task != Task::Flatcam && self.solver.mode == ConstraintMode::Alm {
            return Err(Error::config("solver.mode", "alm applies to the flatcam task only"));
        }
        if self.gmrf_epsilon.is_nan() || self.gmrf_epsilon <= 0.0 {
            return Err(Error::config("gmrf_epsilon", "must be positive"));
        }
        if self.images.is_empty() && self.textures.is_none() {
            return Err(Error::config("images", "no input images or textures given"));
        }
        if let Some(t) = &self.textures {
            t.validate()?;
        }
        match self.prior.as_str() {
            "uniform" | "gaussian_mrf" => {}
            p if p.starts_with("ar:") && p.len() > 3 => {}
            _ => return Err(Error::config("prior", "expected uniform, gaussian_mrf or ar:<checkpoint>")),
        }
        Ok(())
    }
}

/// One scored reconstruction in the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub image: String,
    pub rate: f64,
    pub method: String,
    #[serde(serialize_with = "metrics::ser_db", deserialize_with = "metrics::de_db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub final_residual: f64,
    pub iterations: usize,
}

/// Contents of `metrics.json`. Wall time is left out so that repeated runs
/// produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub task: Task,
    pub prior: String,
    pub seed: u64,
    pub solver: SolverConfig,
    pub results: Vec<ResultRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: MetricsFile,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Builds the forward model for `task` at `rate` for an `h x w` scene.
pub fn make_model(task: Task, rate: f64, height: usize, width: usize, seed: u64) -> Result<SensingModel> {
    let n = height * width;
    let count = |total: usize, r: f64| ((r * total as f64).round() as usize).clamp(1, total);
    Ok(match task {
        Task::Inpaint => SensingModel::Inpaint(make_mask(height, width, 1.0 - rate, seed)?),
        Task::Spc => SensingModel::Spc(vec![make_spc_operator(count(n, rate), n, seed)?]),
        Task::Lisens => SensingModel::LiSens(vec![make_lisens_operator(count(height, rate), height, seed)?]),
        Task::Flatcam => {
            let s = rate.sqrt();
            SensingModel::FlatCam(vec![make_flatcam_operator(
                count(height, s),
                count(width, s),
                height,
                width,
                seed,
            )?])
        }
    })
}

pub(crate) fn load_prior(spec: &str, base: &Path, epsilon: f64) -> Result<Box<dyn ImagePrior>> {
    Ok(match spec {
        "uniform" => Box::new(UniformPrior),
        "gaussian_mrf" => Box::new(GaussianMrfPrior::new(epsilon)?),
        p => {
            let path = resolve(base, Path::new(&p["ar:".len()..]));
            if !path.exists() {
                return Err(Error::config("prior", format!("checkpoint {} not found", path.display())));
            }
            Box::new(load_checkpoint(path)?)
        }
    })
}

/// Writes the per-iteration trace as CSV.
pub fn write_trace(trace: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "iteration",
        "log_density",
        "residual",
        "grad_norm",
        "psnr",
        "pre_clip_residual",
        "objective",
    ])
    .map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for t in trace {
        w.write_record([
            t.iteration.to_string(),
            format!("{}", t.log_density),
            format!("{}", t.residual),
            format!("{}", t.grad_norm),
            opt(t.psnr),
            format!("{}", t.pre_clip_residual),
            opt(t.objective),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn rate_tag(rate: f64) -> String {
    format!("{rate}").replace('.', "p")
}

/// Loads and runs the experiment described by the TOML file at `config_path`.
pub fn run_experiment(config_path: impl AsRef<Path>) -> Result<ExperimentSummary> {
    let path = config_path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_config(&cfg, base)
}

/// Runs a parsed experiment; relative paths resolve against `base`.
pub fn run_config(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let mut truths: Vec<(String, Image)> = Vec::new();
    for (i, p) in cfg.images.iter().enumerate() {
        let full = resolve(base, p);
        if !full.exists() {
            return Err(Error::config(format!("images[{i}]"), format!("{} not found", full.display())));
        }
        let stem = full
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        truths.push((format!("{i:03}_{stem}"), load_image(&full)?));
    }
    if let Some(spec) = &cfg.textures {
        for (i, img) in synthesize(spec)?.into_iter().enumerate() {
            truths.push((format!("texture_{i:05}"), img));
        }
    }
    let prior = load_prior(&cfg.prior, base, cfg.gmrf_epsilon)?;

    let out = resolve(base, &cfg.output_dir);
    std::fs::create_dir_all(&out)?;
    let dropouts = cfg
        .dropout_ratios
        .clone()
        .unwrap_or_else(|| vec![cfg.solver.dropout_ratio]);
    let sweep = cfg.dropout_ratios.is_some();

    let mut rows = Vec::new();
    for (ii, (name, truth)) in truths.iter().enumerate() {
        let (h, w, _) = truth.shape();
        let dir = out.join(name);
        if cfg.save_images {
            std::fs::create_dir_all(&dir)?;
            save_image(truth, dir.join("truth.png"))?;
        }
        for (ri, &rate) in cfg.rates().iter().enumerate() {
            let op_seed = rng::derive_seed(rng::derive_seed(cfg.seed, ii as u64), ri as u64);
            let model = make_model(cfg.task, rate, h, w, op_seed)?;
            let clean = model.forward(truth)?;
            let y = add_measurement_noise(&clean, cfg.noise_sigma, rng::derive_seed(op_seed, 1))?;
            let problem = Problem::new(model, y, h, w, truth.channels())?;
            let stem = format!("{}_rate{}", cfg.task.name(), rate_tag(rate));

            for &d in &dropouts {
                let method = if sweep { format!("ours_dropout{}", rate_tag(d)) } else { "ours".into() };
                let solver = SolverConfig {
                    dropout_ratio: d,
                    rng_seed: rng::derive_seed(cfg.solver.rng_seed ^ op_seed, 2),
                    ..cfg.solver.clone()
                };
                let rep = reconstruct(&problem, prior.as_ref(), &solver, Some(truth))?;
                let m = metrics::evaluate(truth, &rep.estimate)?;
                if cfg.save_images {
                    save_image(&rep.estimate, dir.join(format!("{stem}_{method}.png")))?;
                    write_trace(&rep.trace, dir.join(format!("{stem}_{method}_trace.csv")))?;
                }
                rows.push(ResultRow {
                    image: name.clone(),
                    rate,
                    method,
                    psnr_db: m.psnr_db,
                    ssim: m.ssim,
                    final_residual: rep.final_residual,
                    iterations: rep.iterations,
                });
            }
            if cfg.baselines {
                for b in Baseline::applicable(&problem.model) {
                    let est = b.run(&problem, cfg.gmrf_epsilon)?;
                    let m = metrics::evaluate(truth, &est)?;
                    if cfg.save_images {
                        save_image(&est, dir.join(format!("{stem}_{}.png", b.label())))?;
                    }
                    rows.push(ResultRow {
                        image: name.clone(),
                        rate,
                        method: b.label().into(),
                        psnr_db: m.psnr_db,
                        ssim: m.ssim,
                        final_residual: problem.relative_residual(&est)?,
                        iterations: 0,
                    });
                }
            }
        }
    }

    let metrics = MetricsFile {
        task: cfg.task,
        prior: cfg.prior.clone(),
        seed: cfg.seed,
        solver: cfg.solver.clone(),
        results: rows,
    };
    let metrics_path = out.join("metrics.json");
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&metrics_path, json + "\n")?;
    std::fs::write(out.join("table.csv"), table_from_rows(&metrics.results)?)?;
    Ok(ExperimentSummary {
        output_dir: out,
        metrics_path,
        metrics,
    })
}

pub(crate) fn table_from_rows(rows: &[ResultRow]) -> Result<String> {
    let reports: Vec<MetricReport> = rows
        .iter()
        .map(|r| MetricReport {
            psnr_db: r.psnr_db,
            ssim: r.ssim,
            bits_per_dim: None,
        })
        .collect();
    let labels: Vec<RowLabel> = rows
        .iter()
        .map(|r| RowLabel::new(r.image.clone(), r.rate, r.method.clone()))
        .collect();
    compare_table(&reports, &labels)
}

/// Reads `<dir>/metrics.json` and renders its comparison table.
pub fn table_for_dir(dir: impl AsRef<Path>) -> Result<String> {
    let text = std::fs::read_to_string(dir.as_ref().join("metrics.json"))?;
    let m: MetricsFile = serde_json::from_str(&text).map_err(|e| Error::Format(format!("metrics.json: {e}")))?;
    table_from_rows(&m.results)
}
