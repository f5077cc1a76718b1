//! Non-overlapping square tiles with reflect padding for ragged edges.

use crate::error::{Error, Result};
use crate::image::Image;

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

fn padded(dim: usize, tile: usize) -> usize {
    dim.div_ceil(tile) * tile
}

/// Cuts `image` into `tile x tile` pieces in raster order, reflect-padding
/// the bottom and right edges up to the next multiple of `tile`.
pub fn split(image: &Image, tile: usize) -> Result<Vec<Image>> {
    if tile == 0 {
        return Err(Error::Param("tile size must be positive".into()));
    }
    let (h, w, ch) = image.shape();
    let (ph, pw) = (padded(h, tile), padded(w, tile));
    let mut tiles = Vec::with_capacity((ph / tile) * (pw / tile));
    for ty in 0..ph / tile {
        for tx in 0..pw / tile {
            let mut t = Image::zeros(tile, tile, ch);
            for c in 0..ch {
                let src = image.plane(c);
                let dst = t.plane_mut(c);
                for y in 0..tile {
                    let sy = reflect(ty * tile + y, h);
                    for x in 0..tile {
                        dst[y * tile + x] = src[sy * w + reflect(tx * tile + x, w)];
                    }
                }
            }
            tiles.push(t);
        }
    }
    Ok(tiles)
}

/// Reassembles tiles produced by [`split`] and crops to `height x width`.
pub fn stitch(tiles: &[Image], height: usize, width: usize) -> Result<Image> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::Param("no tiles to stitch".into()))?;
    let (tile, tw, ch) = first.shape();
    if tile != tw || tile == 0 {
        return Err(Error::Param("tiles must be square".into()));
    }
    let (ph, pw) = (padded(height, tile), padded(width, tile));
    let per_row = pw / tile;
    let expected = (ph / tile) * per_row;
    if tiles.len() != expected {
        return Err(Error::Param(format!(
            "{} tiles cannot cover a {height}x{width} image with tile {tile} (need {expected})",
            tiles.len()
        )));
    }
    if tiles.iter().any(|t| t.shape() != (tile, tile, ch)) {
        return Err(Error::Param("tiles differ in shape".into()));
    }
    let mut out = Image::zeros(height, width, ch);
    for (k, t) in tiles.iter().enumerate() {
        let (ty, tx) = (k / per_row, k % per_row);
        for c in 0..ch {
            let src = t.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..tile {
                let oy = ty * tile + y;
                if oy >= height {
                    break;
                }
                for x in 0..tile {
                    let ox = tx * tile + x;
                    if ox >= width {
                        break;
                    }
                    dst[oy * width + ox] = src[y * tile + x];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut r = crate::rng::seeded(seed);
        Image::new(h, w, c, (0..h * w * c).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn single_tile() {
        let x = random(64, 64, 1, 1);
        let t = split(&x, 64).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0], x);
    }

    #[test]
    fn four_tiles_in_raster_order() {
        let x = random(128, 128, 1, 2);
        let t = split(&x, 64).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t[1].get(0, 0, 0), x.get(0, 64, 0));
        assert_eq!(t[2].get(0, 0, 0), x.get(64, 0, 0));
        assert_eq!(stitch(&t, 128, 128).unwrap(), x);
    }

    #[test]
    fn ragged_size_is_reflect_padded() {
        let x = random(96, 96, 1, 3);
        let t = split(&x, 64).unwrap();
        assert_eq!(t.len(), 4);
        // Column 96 mirrors column 94.
        assert_eq!(t[1].get(5, 32, 0), x.get(5, 94, 0));
        assert_eq!(stitch(&t, 96, 96).unwrap(), x);
    }

    #[test]
    fn padding_wider_than_image() {
        let x = random(3, 2, 2, 4);
        let t = split(&x, 8).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(stitch(&t, 3, 2).unwrap(), x);
    }

    #[test]
    fn wrong_tile_count() {
        let t = split(&random(32, 32, 1, 5), 16).unwrap();
        assert!(matches!(stitch(&t[..3], 32, 32), Err(Error::Param(_))));
        assert!(stitch(&[], 4, 4).is_err());
    }
}
