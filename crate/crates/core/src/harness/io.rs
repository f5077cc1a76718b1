//! 8-bit PGM/PNG image files.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};
use crate::image::Image;

fn format_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Loads an 8-bit grayscale or RGB image into `[0, 1]`. Alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| format_error(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => format_error(path, other),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let to_unit = |v: &u8| *v as f64 / 255.0;
    match decoded {
        DynamicImage::ImageLuma8(buf) => Image::gray(h, w, buf.as_raw().iter().map(to_unit).collect()),
        DynamicImage::ImageLumaA8(_) => {
            let buf = decoded.to_luma8();
            Image::gray(h, w, buf.as_raw().iter().map(to_unit).collect())
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let buf = decoded.to_rgb8();
            let raw = buf.as_raw();
            let planes = (0..3)
                .map(|c| (0..h * w).map(|i| to_unit(&raw[3 * i + c])).collect())
                .collect();
            Image::from_planes(h, w, planes)
        }
        other => Err(format_error(
            path,
            format!("unsupported pixel format {:?}; only 8-bit images are handled", other.color()),
        )),
    }
}

/// Saves `image` quantized to 8 bits. The format follows the extension:
/// `.pgm` (grayscale only) or `.png` (grayscale or RGB).
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let (h, w, ch) = image.shape();
    let color = match ch {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        _ => return Err(format_error(path, format!("cannot store {ch} channels"))),
    };
    let clipped = image.map(|v| v.clamp(0.0, 1.0));
    let levels = clipped.levels();
    let hw = h * w;
    let interleaved: Vec<u8> = (0..hw)
        .flat_map(|i| (0..ch).map(move |c| (c, i)))
        .map(|(c, i)| levels[c * hw + i])
        .collect();
    let mut out = BufWriter::new(File::create(path)?);
    let (w32, h32) = (w as u32, h as u32);
    match ext.as_str() {
        "png" => image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&interleaved, w32, h32, color)
            .map_err(|e| format_error(path, e))?,
        "pgm" if ch == 1 => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&interleaved, w32, h32, color)
            .map_err(|e| format_error(path, e))?,
        "pgm" => return Err(format_error(path, "PGM stores grayscale only")),
        _ => return Err(format_error(path, "unsupported extension (use .pgm or .png)")),
    }
    std::io::Write::flush(&mut out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(h: usize, w: usize, c: usize) -> Image {
        let mut r = crate::rng::seeded(1);
        Image::new(h, w, c, (0..h * w * c).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn round_trip_within_half_bin() {
        let dir = tempfile::tempdir().unwrap();
        for (name, c) in [("a.pgm", 1), ("b.png", 1), ("c.png", 3)] {
            let x = random(5, 7, c);
            let path = dir.path().join(name);
            save_image(&x, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back, x.quantized());
            let worst = x.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1.0 / 510.0 + 1e-12);
        }
    }

    #[test]
    fn sixteen_bit_png_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> = image::ImageBuffer::from_pixel(3, 3, image::Luma([4000]));
        buf.save(&path).unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_image("/nonexistent/nowhere.pgm"), Err(Error::Io(_))));
    }

    #[test]
    fn corrupt_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(matches!(load_image(&path), Err(Error::Format(_))));
    }
}
