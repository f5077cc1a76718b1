//! On-disk format for trained autoregressive priors.
//!
//! A single-line JSON header carrying the architecture, followed by one
//! section per parameter tensor: a `#name` line and a matrix block.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ar::{ArConfig, ArParams, ArPriorModel};
use crate::error::{Error, Result};
use crate::imaging::container::{read_line, read_matrix, write_matrix};

const HEADER_LIMIT: usize = 1 << 16;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    layers: usize,
    channels: usize,
    features: usize,
    mixtures: usize,
    patch_size: usize,
    levels: usize,
    seed: u64,
    first_kernel: usize,
    kernel: usize,
    sections: Vec<String>,
}

const FORMAT: &str = "pixprior-ar-1";

pub fn write_checkpoint<W: Write>(w: &mut W, model: &ArPriorModel) -> Result<()> {
    let cfg = model.config();
    let tensors = model.params().tensors();
    let header = Header {
        format: FORMAT.into(),
        layers: cfg.layers,
        channels: cfg.in_channels,
        features: cfg.features,
        mixtures: cfg.mixtures,
        patch_size: cfg.patch_size,
        levels: cfg.levels,
        seed: cfg.seed,
        first_kernel: cfg.first_kernel,
        kernel: cfg.kernel,
        sections: tensors.iter().map(|(n, _)| n.clone()).collect(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w, "{json}")?;
    for (name, values) in tensors {
        writeln!(w, "#{name}")?;
        write_matrix(w, &DMatrix::from_row_slice(1, values.len(), values))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ArPriorModel> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("checkpoint header is truncated".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > HEADER_LIMIT {
            return Err(Error::Format("checkpoint header is too long".into()));
        }
    }
    let header: Header =
        serde_json::from_slice(&line).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format {:?}", header.format)));
    }
    let config = ArConfig {
        in_channels: header.channels,
        features: header.features,
        layers: header.layers,
        first_kernel: header.first_kernel,
        kernel: header.kernel,
        mixtures: header.mixtures,
        patch_size: header.patch_size,
        levels: header.levels,
        seed: header.seed,
    };
    config.validate().map_err(|e| Error::Format(format!("checkpoint architecture: {e}")))?;
    let mut params = ArParams::zeros(&config);
    let expected: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    if header.sections != expected {
        return Err(Error::Format("checkpoint sections do not match the architecture".into()));
    }
    for (name, slot) in expected.iter().zip(params.tensors_mut()) {
        let tag = read_line(r)?;
        if tag.strip_prefix('#') != Some(name.as_str()) {
            return Err(Error::Format(format!("expected section {name}, found {tag:?}")));
        }
        let m = read_matrix(r)?;
        if m.len() != slot.len() {
            return Err(Error::Shape(format!(
                "section {name} has {} values, expected {}",
                m.len(),
                slot.len()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("section {name} contains non-finite values")));
        }
        // Row vector: column-major storage is also the row order.
        slot.copy_from_slice(m.as_slice());
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last checkpoint section".into()));
    }
    ArPriorModel::with_params(config, params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ArPriorModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ArPriorModel> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
