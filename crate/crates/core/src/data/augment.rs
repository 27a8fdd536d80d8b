use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap, Tile};

pub fn flip_horizontal(tile: &Tile) -> Tile {
    remap(tile, tile.image.height, tile.image.width, |r, c| (r, tile.image.width - 1 - c))
}

pub fn flip_vertical(tile: &Tile) -> Tile {
    remap(tile, tile.image.height, tile.image.width, |r, c| (tile.image.height - 1 - r, c))
}

/// Output pixel (r, c) takes the input pixel `source(r, c)`, for image and label alike.
fn remap(tile: &Tile, height: usize, width: usize, source: impl Fn(usize, usize) -> (usize, usize)) -> Tile {
    let mut image = Image::filled(height, width, [0; 3]);
    let mut label = tile.label.as_ref().map(|_| LabelMap::filled(height, width, 0));
    for r in 0..height {
        for c in 0..width {
            let (sr, sc) = source(r, c);
            image.set_pixel(r, c, tile.image.pixel(sr, sc));
            if let (Some(out), Some(src)) = (label.as_mut(), tile.label.as_ref()) {
                out.set(r, c, src.get(sr, sc));
            }
        }
    }
    Tile {
        id: tile.id.clone(),
        image,
        label,
    }
}

/// Random crop of `crop = (height, width)` followed by independent horizontal
/// and vertical flips, each with probability `flip_prob`. Image and label share
/// the transform. Random draws happen in a fixed order (top, left, h-flip,
/// v-flip) so equal seeds replay exactly.
pub fn augment_geometric<R: Rng + ?Sized>(
    tile: &Tile,
    rng: &mut R,
    crop: (usize, usize),
    flip_prob: f64,
) -> Result<Tile> {
    let (h, w) = tile.dims();
    let (ch, cw) = crop;
    if ch > h || cw > w || ch == 0 || cw == 0 {
        return Err(Error::CropTooLarge {
            crop,
            size: (h, w),
        });
    }
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    let hflip = rng.random::<f64>() < flip_prob;
    let vflip = rng.random::<f64>() < flip_prob;
    Ok(remap(tile, ch, cw, |r, c| {
        let r = if vflip { ch - 1 - r } else { r };
        let c = if hflip { cw - 1 - c } else { c };
        (top + r, left + c)
    }))
}
