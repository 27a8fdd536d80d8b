//! Binary morphology with a square structuring element.
//!
//! Erosion and dilation clip the window at the raster border, so a region
//! touching the border survives opening. Closing instead runs on a canvas
//! padded with background: with a clipped window a dilated shape next to the
//! border would not erode back and closing would grow it.

use crate::error::{Error, Result};
use crate::raster::Mask;

pub(crate) fn check_kernel(kernel: usize) -> Result<usize> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::InvalidKernel(kernel));
    }
    Ok(kernel / 2)
}

fn reduce(all: bool, mut it: impl Iterator<Item = bool>) -> bool {
    if all {
        it.all(|b| b)
    } else {
        it.any(|b| b)
    }
}

/// One separable pass: `all` = erosion, `!all` = dilation.
fn pass(mask: &Mask, radius: usize, all: bool) -> Mask {
    let (h, w) = (mask.height, mask.width);
    let mut rows = Mask::empty(h, w);
    for r in 0..h {
        for c in 0..w {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(w - 1);
            rows.set(r, c, reduce(all, (lo..=hi).map(|cc| mask.get(r, cc))));
        }
    }
    let mut out = Mask::empty(h, w);
    for r in 0..h {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(h - 1);
        for c in 0..w {
            out.set(r, c, reduce(all, (lo..=hi).map(|rr| rows.get(rr, c))));
        }
    }
    out
}

pub fn erode(mask: &Mask, kernel: usize) -> Result<Mask> {
    let radius = check_kernel(kernel)?;
    Ok(pass(mask, radius, true))
}

pub fn dilate(mask: &Mask, kernel: usize) -> Result<Mask> {
    let radius = check_kernel(kernel)?;
    Ok(pass(mask, radius, false))
}

/// Erosion then dilation: removes structures thinner than the kernel.
pub fn morphological_open(mask: &Mask, kernel: usize) -> Result<Mask> {
    dilate(&erode(mask, kernel)?, kernel)
}

/// Dilation then erosion: fills holes smaller than the kernel. Never grows a
/// shape beyond its bounding box.
pub fn morphological_close(mask: &Mask, kernel: usize) -> Result<Mask> {
    let radius = check_kernel(kernel)?;
    let (h, w) = (mask.height, mask.width);
    let padded = Mask::from_fn(h + 2 * radius, w + 2 * radius, |r, c| {
        (radius..radius + h).contains(&r) && (radius..radius + w).contains(&c) && mask.get(r - radius, c - radius)
    });
    let closed = pass(&pass(&padded, radius, false), radius, true);
    Ok(Mask::from_fn(h, w, |r, c| closed.get(r + radius, c + radius)))
}

/// 4-connected components as lists of flat pixel indices, in raster order of
/// their first pixel.
pub fn connected_components(mask: &Mask) -> Vec<Vec<usize>> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask.data[start] || seen[start] {
            continue;
        }
        let mut component = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            component.push(p);
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if mask.data[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    components
}

/// Drops 4-connected components with fewer than `min_region` pixels.
pub fn remove_small_components(mask: &Mask, min_region: usize) -> Mask {
    let mut out = Mask::empty(mask.height, mask.width);
    for component in connected_components(mask) {
        if component.len() >= min_region {
            for p in component {
                out.data[p] = true;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(h: usize, w: usize, r0: usize, c0: usize, size: usize) -> Mask {
        Mask::from_fn(h, w, |r, c| (r0..r0 + size).contains(&r) && (c0..c0 + size).contains(&c))
    }

    #[test]
    fn opening_removes_isolated_pixel() {
        let mut m = Mask::empty(7, 7);
        m.set(3, 3, true);
        assert_eq!(morphological_open(&m, 3).unwrap().count(), 0);
    }

    #[test]
    fn opening_keeps_solid_block() {
        let m = block(9, 9, 2, 2, 5);
        assert_eq!(morphological_open(&m, 3).unwrap(), m);
    }

    #[test]
    fn closing_fills_single_hole() {
        let m = block(9, 9, 2, 2, 5);
        let mut holed = m.clone();
        holed.set(4, 4, false);
        assert_eq!(morphological_close(&holed, 3).unwrap(), m);
    }

    #[test]
    fn closing_empty_stays_empty() {
        let m = Mask::empty(5, 6);
        assert_eq!(morphological_close(&m, 3).unwrap(), m);
    }

    #[test]
    fn border_block_is_not_eroded_away() {
        let m = block(6, 6, 0, 0, 3);
        assert_eq!(morphological_open(&m, 3).unwrap(), m);
    }

    #[test]
    fn closing_does_not_grow_toward_the_border() {
        let m = block(8, 8, 1, 1, 5);
        assert_eq!(morphological_close(&m, 3).unwrap(), m);
        let edge = block(8, 8, 0, 3, 4);
        assert_eq!(morphological_close(&edge, 5).unwrap(), edge);
    }

    #[test]
    fn even_kernel_is_rejected() {
        assert!(matches!(erode(&Mask::empty(2, 2), 2), Err(Error::InvalidKernel(2))));
        assert!(matches!(dilate(&Mask::empty(2, 2), 0), Err(Error::InvalidKernel(0))));
    }

    #[test]
    fn components_use_four_connectivity() {
        let m = Mask::from_rows(&[[1u8, 0, 0], [0, 1, 1], [0, 0, 1]]);
        let cc = connected_components(&m);
        assert_eq!(cc, vec![vec![0], vec![4, 5, 8]]);
        assert_eq!(remove_small_components(&m, 2).count(), 3);
    }

    proptest! {
        #[test]
        fn opening_and_closing_are_idempotent(
            bits in proptest::collection::vec(any::<bool>(), 100),
            k in prop_oneof![Just(1usize), Just(3), Just(5)],
        ) {
            let m = Mask { height: 10, width: 10, data: bits };
            let o = morphological_open(&m, k).unwrap();
            prop_assert_eq!(morphological_open(&o, k).unwrap(), o.clone());
            let c = morphological_close(&m, k).unwrap();
            prop_assert_eq!(morphological_close(&c, k).unwrap(), c.clone());
            // anti-extensive / extensive
            for i in 0..100 {
                prop_assert!(!o.data[i] || m.data[i]);
                prop_assert!(!m.data[i] || c.data[i]);
            }
        }
    }
}
