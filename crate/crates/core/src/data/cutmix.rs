//! NovelCutMix: paste the novel-class pixels of a support tile onto a base
//! training tile; the mixed sample takes the support label wholesale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, LabelMap, Mask, Tile};
use crate::IGNORE;

/// Where the support patch lands on the training tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Same pixel coordinates as in the support tile.
    #[default]
    Aligned,
    /// Support image, label and mask translated together by a random offset
    /// that keeps every novel pixel inside the tile.
    RandomShift,
}

/// M(i,j) = 1 where the support label is a novel class (> 0), else 0.
pub fn build_novel_mask(support_label: &LabelMap) -> Result<Mask> {
    if support_label.data.contains(&IGNORE) {
        return Err(Error::IgnoreInSupport);
    }
    Ok(Mask {
        height: support_label.height,
        width: support_label.width,
        data: support_label.data.iter().map(|&v| v > 0).collect(),
    })
}

fn bounding_box(mask: &Mask) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for r in 0..mask.height {
        for c in 0..mask.width {
            if mask.get(r, c) {
                bbox = Some(match bbox {
                    None => (r, r, c, c),
                    Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                });
            }
        }
    }
    bbox
}

/// Mixed image `M⊙X_V + (1−M)⊙X_T` with label `Y_V`.
///
/// With [`Placement::RandomShift`] the support tile is translated first;
/// pixels shifted in from outside the support tile are background with M = 0.
pub fn novel_cutmix<R: Rng + ?Sized>(
    train: &Tile,
    support: &Tile,
    placement: Placement,
    rng: &mut R,
) -> Result<Tile> {
    if train.dims() != support.dims() {
        return Err(Error::Shape(format!(
            "train tile {:?} vs support tile {:?}",
            train.dims(),
            support.dims()
        )));
    }
    let support_label = support.require_label()?;
    let mask = build_novel_mask(support_label)?;
    let (h, w) = train.dims();

    let (dy, dx) = match (placement, bounding_box(&mask)) {
        (Placement::RandomShift, Some((r0, r1, c0, c1))) => {
            let dy = rng.random_range(-(r0 as i64)..=(h - 1 - r1) as i64);
            let dx = rng.random_range(-(c0 as i64)..=(w - 1 - c1) as i64);
            (dy, dx)
        }
        _ => (0, 0),
    };

    let mut image = Image::filled(h, w, [0; 3]);
    let mut label = LabelMap::filled(h, w, 0);
    for r in 0..h {
        for c in 0..w {
            let sr = r as i64 - dy;
            let sc = c as i64 - dx;
            let inside = sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w;
            let (m, y) = if inside {
                let (sr, sc) = (sr as usize, sc as usize);
                (mask.get(sr, sc), support_label.get(sr, sc))
            } else {
                (false, 0)
            };
            label.set(r, c, y);
            let px = if m {
                support.image.pixel(sr as usize, sc as usize)
            } else {
                train.image.pixel(r, c)
            };
            image.set_pixel(r, c, px);
        }
    }
    Ok(Tile {
        id: format!("{}+{}", train.id, support.id),
        image,
        label: Some(label),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tile(id: &str, rgb: [u8; 3], label: LabelMap) -> Tile {
        Tile::new(id, Image::filled(label.height, label.width, rgb), Some(label)).unwrap()
    }

    #[test]
    fn mask_marks_novel_pixels() {
        let m = build_novel_mask(&LabelMap::from_rows(&[[3u8, 0], [0, 7]])).unwrap();
        assert_eq!(m.rows(), vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(build_novel_mask(&LabelMap::filled(3, 2, 0)).unwrap().count(), 0);
        assert_eq!(build_novel_mask(&LabelMap::filled(3, 2, 5)).unwrap().count(), 6);
    }

    #[test]
    fn ignore_in_support_is_rejected() {
        assert!(matches!(
            build_novel_mask(&LabelMap::from_rows(&[[255u8, 0]])),
            Err(Error::IgnoreInSupport)
        ));
    }

    #[test]
    fn empty_support_mask_keeps_train_image() {
        let train = tile("t", [10, 20, 30], LabelMap::filled(3, 3, 2));
        let support = tile("s", [200, 0, 0], LabelMap::filled(3, 3, 0));
        for placement in [Placement::Aligned, Placement::RandomShift] {
            let out = novel_cutmix(&train, &support, placement, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(out.image, train.image);
            assert_eq!(out.label.unwrap(), LabelMap::filled(3, 3, 0));
        }
    }

    #[test]
    fn full_support_mask_takes_support() {
        let train = tile("t", [10, 20, 30], LabelMap::filled(2, 2, 1));
        let support = tile("s", [200, 0, 0], LabelMap::filled(2, 2, 9));
        let out = novel_cutmix(&train, &support, Placement::Aligned, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.image, support.image);
        assert_eq!(out.label, support.label);
    }

    #[test]
    fn single_novel_pixel() {
        let train = tile("t", [1, 1, 1], LabelMap::filled(2, 2, 1));
        let support = tile("s", [9, 9, 9], LabelMap::from_rows(&[[9u8, 0], [0, 0]]));
        let out = novel_cutmix(&train, &support, Placement::Aligned, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.image.pixel(0, 0), [9, 9, 9]);
        for (r, c) in [(0, 1), (1, 0), (1, 1)] {
            assert_eq!(out.image.pixel(r, c), [1, 1, 1]);
        }
        assert_eq!(out.label.unwrap().rows(), vec![vec![9, 0], vec![0, 0]]);
    }

    #[test]
    fn shape_mismatch() {
        let train = tile("t", [1, 1, 1], LabelMap::filled(2, 2, 1));
        let support = tile("s", [9, 9, 9], LabelMap::filled(2, 3, 0));
        assert!(matches!(
            novel_cutmix(&train, &support, Placement::Aligned, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn random_shift_moves_patch_intact() {
        let mut label = LabelMap::filled(16, 16, 0);
        for r in 2..5 {
            for c in 3..6 {
                label.set(r, c, 4);
            }
        }
        let mut support = tile("s", [0, 0, 0], label);
        for r in 0..16 {
            for c in 0..16 {
                support.image.set_pixel(r, c, [r as u8, c as u8, 99]);
            }
        }
        let train = tile("t", [7, 7, 7], LabelMap::filled(16, 16, 1));
        let mut moved = false;
        for seed in 0..20 {
            let out = novel_cutmix(&train, &support, Placement::RandomShift, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let out_label = out.label.unwrap();
            assert_eq!(out_label.data.iter().filter(|&&v| v == 4).count(), 9);
            for r in 0..16 {
                for c in 0..16 {
                    let px = out.image.pixel(r, c);
                    if out_label.get(r, c) == 4 {
                        assert_eq!(px[2], 99);
                        moved |= (px[0] as usize, px[1] as usize) != (r, c);
                    } else {
                        assert_eq!(px, [7, 7, 7]);
                    }
                }
            }
        }
        assert!(moved);
    }
}
