//! Binary matrix container.
//!
//! A block is the magic `PXP1\n`, an ASCII header `rows cols\n`, then
//! `rows * cols` little-endian `f64` values in row-major order. Files may hold
//! several consecutive blocks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::separable::SeparableOperator;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"PXP1\n";

/// Longest accepted header line; guards against reading binary data as text.
const MAX_HEADER: usize = 64;

pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_line<R: Read>(r: &mut R) -> Result<String> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match r.read(&mut byte)? {
            0 => return Err(Error::Format("unexpected end of file in header".into())),
            _ if byte[0] == b'\n' => break,
            _ => {
                line.push(byte[0]);
                if line.len() > MAX_HEADER {
                    return Err(Error::Format("header line too long".into()));
                }
            }
        }
    }
    String::from_utf8(line).map_err(|_| Error::Format("header is not ASCII".into()))
}

/// Reads one block. Returns `Ok(None)` at a clean end of input.
pub fn read_matrix_opt<R: Read>(r: &mut R) -> Result<Option<DMatrix<f64>>> {
    let mut magic = [0u8; 5];
    let mut got = 0;
    while got < magic.len() {
        let n = r.read(&mut magic[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got == 0 {
        return Ok(None);
    }
    if got < magic.len() || &magic != MAGIC {
        return Err(Error::Format("bad magic bytes, expected PXP1".into()));
    }
    let header = read_line(r)?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("malformed header `{header}`")))
    };
    if dims.len() != 2 {
        return Err(Error::Format(format!("malformed header `{header}`")));
    }
    let (rows, cols) = (parse(dims[0])?, parse(dims[1])?);
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(count);
    let mut word = [0u8; 8];
    for i in 0..count {
        if let Err(e) = r.read_exact(&mut word) {
            return Err(if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Shape(format!(
                    "header declares {rows}x{cols} = {count} values but only {i} present"
                ))
            } else {
                e.into()
            });
        }
        values.push(f64::from_le_bytes(word));
    }
    Ok(Some(DMatrix::from_row_slice(rows, cols, &values)))
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    read_matrix_opt(r)?.ok_or_else(|| Error::Format("empty matrix file".into()))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Loads a single-block matrix file; trailing bytes are a shape error.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let m = read_matrix(&mut r)?;
    expect_eof(&mut r, &m)?;
    Ok(m)
}

fn expect_eof<R: Read>(r: &mut R, last: &DMatrix<f64>) -> Result<()> {
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Shape(format!(
            "extra data after {}x{} block",
            last.nrows(),
            last.ncols()
        )));
    }
    Ok(())
}

/// Writes `Φ_L` then `Φ_R` as two consecutive blocks.
pub fn save_calibration(path: impl AsRef<Path>, op: &SeparableOperator) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, op.left())?;
    write_matrix(&mut w, op.right())?;
    w.flush()?;
    Ok(())
}

/// Reads a calibrated separable operator written by [`save_calibration`].
pub fn load_calibration(path: impl AsRef<Path>) -> Result<SeparableOperator> {
    let mut r = BufReader::new(File::open(path)?);
    let left = read_matrix(&mut r)?;
    let right = read_matrix(&mut r)?;
    expect_eof(&mut r, &right)?;
    for (name, m) in [("left", &left), ("right", &right)] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("{name} factor has non-finite entries")));
        }
    }
    SeparableOperator::new(left, right)
}
