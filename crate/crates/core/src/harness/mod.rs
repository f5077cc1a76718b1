//! Experiment orchestration behind the command-line tool.

pub mod baselines;
pub mod experiment;
pub mod io;
pub mod table;
pub mod textures;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use baselines::Baseline;
pub use experiment::{
    make_model, run_config, run_experiment, table_for_dir, write_trace, ExperimentConfig, ExperimentSummary,
    MetricsFile, ResultRow, Task,
};
pub use io::{load_image, save_image};
pub use table::{compare_table, RowLabel};
pub use textures::{generate_textures, synthesize, SyntheticTextureSpec, TextureGenerator};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::priors::checkpoint::save_checkpoint;
use crate::priors::{train_ar_prior, HistogramModel, TrainConfig, TrainReport};

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let field = msg.split('`').nth(1).unwrap_or("config").to_string();
        Error::config(field, msg)
    })
}

/// `gen-textures` job file: an output directory plus a `[textures]` table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureJob {
    pub output_dir: PathBuf,
    pub textures: SyntheticTextureSpec,
}

pub fn run_texture_job(path: impl AsRef<Path>, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let mut job: TextureJob = parse_toml(&std::fs::read_to_string(path)?)?;
    if let Some(s) = seed {
        job.textures.rng_seed = s;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    generate_textures(&job.textures, base.join(&job.output_dir))
}

/// `train-prior` job file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    /// Checkpoint to write; the training report goes next to it as JSON.
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Directory of PGM/PNG patches.
    #[serde(default)]
    pub images_dir: Option<PathBuf>,
    #[serde(default)]
    pub textures: Option<SyntheticTextureSpec>,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub report: TrainReport,
    /// Held-out bits/dim of a shared per-pixel histogram fit to the same data.
    pub histogram_bits_per_dim: f64,
}

pub fn run_train_job(path: impl AsRef<Path>, seed: Option<u64>) -> Result<TrainSummary> {
    let path = path.as_ref();
    let mut job: TrainJob = parse_toml(&std::fs::read_to_string(path)?)?;
    if let Some(s) = seed {
        job.seed = s;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut data: Vec<Image> = Vec::new();
    if let Some(dir) = &job.images_dir {
        let dir = base.join(dir);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                    Some("pgm" | "png")
                )
            })
            .collect();
        files.sort();
        for f in files {
            data.push(load_image(f)?);
        }
    }
    if let Some(spec) = &job.textures {
        data.extend(synthesize(spec)?);
    }
    if data.is_empty() {
        return Err(Error::config("images_dir", "no training patches found"));
    }
    let (model, report) = train_ar_prior(&data, &job.train, job.seed)?;
    let quantized: Vec<Image> = data.iter().map(|i| i.quantized()).collect();
    let (train, holdout) = crate::priors::train::holdout_split(&quantized, job.train.holdout_fraction, job.seed);
    let histogram_bits_per_dim = HistogramModel::fit(&train)?.bits_per_dim(&holdout)?;

    let out = base.join(&job.output);
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&out, &model)?;
    let summary = TrainSummary {
        report,
        histogram_bits_per_dim,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(out.with_extension("report.json"), json + "\n")?;
    Ok(summary)
}
