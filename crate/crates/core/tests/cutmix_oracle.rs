//! NovelCutMix against a per-pixel oracle, plus the translation property of
//! the random-shift placement.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segland_core::data::{build_novel_mask, novel_cutmix, Placement};
use segland_core::{Error, Image, LabelMap, Tile};

fn random_tile(rng: &mut ChaCha8Rng, id: &str, n: usize, novel_ids: &[u8], density: f64) -> Tile {
    let image = Image::new(n, n, (0..n * n * 3).map(|_| rng.random()).collect()).unwrap();
    let label = LabelMap::new(
        n,
        n,
        (0..n * n)
            .map(|_| {
                if rng.random::<f64>() < density {
                    novel_ids[rng.random_range(0..novel_ids.len())]
                } else {
                    0
                }
            })
            .collect(),
    )
    .unwrap();
    Tile::new(id, image, Some(label)).unwrap()
}

/// Pixel (r, c) of the mixed image, computed directly from the mixing rule.
fn oracle_pixel(train: &Tile, support: &Tile, r: usize, c: usize) -> [u8; 3] {
    let m = u8::from(support.label.as_ref().unwrap().get(r, c) > 0);
    let (xv, xt) = (support.image.pixel(r, c), train.image.pixel(r, c));
    std::array::from_fn(|ch| m * xv[ch] + (1 - m) * xt[ch])
}

#[test]
fn aligned_matches_oracle_on_200_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0usize;
    for pair in 0..200 {
        let density = [0.0, 0.1, 0.5, 1.0][pair % 4];
        let train = random_tile(&mut rng, "t", 16, &[1, 2, 3], 0.0);
        let support = random_tile(&mut rng, "s", 16, &[4, 5], density);
        let out = novel_cutmix(&train, &support, Placement::Aligned, &mut rng).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                mismatches += usize::from(out.image.pixel(r, c) != oracle_pixel(&train, &support, r, c));
            }
        }
        assert_eq!(out.label, support.label, "pair {pair}");
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn two_by_two_example() {
    let train = Tile::new("t", Image::filled(2, 2, [1, 1, 1]), Some(LabelMap::filled(2, 2, 2))).unwrap();
    let support = Tile::new(
        "s",
        Image::filled(2, 2, [9, 9, 9]),
        Some(LabelMap::from_rows(&[[9, 0], [0, 0]])),
    )
    .unwrap();
    let out = novel_cutmix(&train, &support, Placement::Aligned, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.image.pixel(0, 0), [9, 9, 9]);
    for (r, c) in [(0, 1), (1, 0), (1, 1)] {
        assert_eq!(out.image.pixel(r, c), [1, 1, 1]);
    }
    assert_eq!(out.label.unwrap(), LabelMap::from_rows(&[[9, 0], [0, 0]]));
}

#[test]
fn mask_rules() {
    let mask = build_novel_mask(&LabelMap::from_rows(&[[3, 0], [0, 7]])).unwrap();
    assert_eq!(mask.rows(), vec![vec![1, 0], vec![0, 1]]);
    assert!(matches!(
        build_novel_mask(&LabelMap::from_rows(&[[255, 0]])),
        Err(Error::IgnoreInSupport)
    ));
}

#[test]
fn mismatched_tiles_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_tile(&mut rng, "a", 8, &[4], 0.2);
    let b = random_tile(&mut rng, "b", 16, &[4], 0.2);
    assert!(matches!(
        novel_cutmix(&a, &b, Placement::Aligned, &mut rng),
        Err(Error::Shape(_))
    ));
}

/// True if `out` is the support tile translated by (dy, dx) and mixed onto
/// `train`, with everything shifted in from outside counted as background.
fn is_shifted_mix(out: &Tile, train: &Tile, support: &Tile, dy: i64, dx: i64) -> bool {
    let n = train.image.height as i64;
    let label = support.label.as_ref().unwrap();
    let out_label = out.label.as_ref().unwrap();
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = (r - dy, c - dx);
            let inside = (0..n).contains(&sr) && (0..n).contains(&sc);
            let (y, x) = if inside {
                (label.get(sr as usize, sc as usize), support.image.pixel(sr as usize, sc as usize))
            } else {
                (0, [0; 3])
            };
            let expected = if y > 0 { x } else { train.image.pixel(r as usize, c as usize) };
            if out_label.get(r as usize, c as usize) != y || out.image.pixel(r as usize, c as usize) != expected {
                return false;
            }
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_shift_is_a_translated_mix(seed in any::<u64>(), density in 0.0f64..0.3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = random_tile(&mut rng, "t", 8, &[1], 0.0);
        let support = random_tile(&mut rng, "s", 8, &[2, 3], density);
        let out = novel_cutmix(&train, &support, Placement::RandomShift, &mut rng).unwrap();
        let found = (-7..=7i64).any(|dy| (-7..=7i64).any(|dx| is_shifted_mix(&out, &train, &support, dy, dx)));
        prop_assert!(found);
        let novel = |t: &Tile| t.label.as_ref().unwrap().data.iter().filter(|&&v| v > 0).count();
        prop_assert_eq!(novel(&out), novel(&support));
    }

    #[test]
    fn equal_seeds_replay(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = random_tile(&mut rng, "t", 8, &[1], 0.0);
        let support = random_tile(&mut rng, "s", 8, &[2], 0.2);
        let a = novel_cutmix(&train, &support, Placement::RandomShift, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = novel_cutmix(&train, &support, Placement::RandomShift, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
